#pragma once

#include <string>

#include "osdec/model.hpp"
#include "osdec/simenv.hpp"
#include "osdec/trainer.hpp"
#include "osdec/workload.hpp"

namespace osdec {

// One structured config file for the whole workbench. Every key has a
// default; unknown keys are rejected. The master seed fans out to the
// generator, model initialization, and training streams.
struct ExperimentConfig {
  int version = 1;
  uint64_t seed = 1;
  RewardWeights weights;
  SyntheticSpec synthetic;
  ModelConfig model;
  PpoConfig ppo;
  size_t trainTraces = 8;  // synthetic traces in the training pool

  // Applies the fan-out rule: per-trace generator seeds, model init seed,
  // and the PPO stream seed are all derived from `seed`.
  uint64_t trace_seed(size_t index) const {
    return derive_seed(seed, /*purpose=*/50, index);
  }
  uint64_t model_seed() const { return derive_seed(seed, /*purpose=*/51, 0); }
  uint64_t ppo_seed() const { return derive_seed(seed, /*purpose=*/52, 0); }

  TracePool build_trace_pool() const;
};

ExperimentConfig parse_experiment_config(const std::string& jsonText);
ExperimentConfig load_experiment_config(const std::string& path);
std::string experiment_config_to_json(const ExperimentConfig& config);

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& jsonText);

}  // namespace osdec
