#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "osdec/model.hpp"
#include "osdec/simenv.hpp"
#include "osdec/workload.hpp"

namespace osdec {

struct PpoConfig {
  double gamma = 0.99;
  double lambda = 0.95;
  double epsilon = 0.2;
  size_t batchSize = 2048;
  size_t minibatchSize = 64;
  double policyLrStart = 1e-4, policyLrEnd = 1e-5;
  double valueLrStart = 2e-4, valueLrEnd = 2e-5;
  double auxLrStart = 1e-2, auxLrEnd = 1e-3;
  size_t workers = 16;
  size_t epochsPerUpdate = 4;
  size_t iterations = 200;
  size_t evalTrajectories = 100;
  size_t evalEvery = 10;        // evaluation cadence in iterations
  size_t checkpointEvery = 50;
  bool normalizeAdvantages = true;
  // Rewards are multiplied by this scale for advantage and value-target
  // computation only; metrics always use raw rewards.
  double rewardScale = 1.0;
  uint64_t seed = 1;

  void validate() const;
  double policy_lr(size_t iter) const;
  double value_lr(size_t iter) const;
  double aux_lr(size_t iter) const;
};

struct Transition {
  JobFeatures features;
  std::vector<double> cs;
  double logProbOld = 0.0;
  double reward = 0.0;  // scaled by rewardScale
  double value = 0.0;
  bool done = false;
  size_t episode = 0;
  double advantage = 0.0;            // pre-normalization
  double advantageNormalized = 0.0;
};

struct TrajectoryBatch {
  std::vector<Transition> transitions;  // grouped by episode, time ordered
  std::vector<AuxSample> auxSamples;
  std::vector<Metrics> episodeMetrics;
};

// Value regression target: advantage + collected value estimate.
inline double value_target(const Transition& tr) {
  return tr.advantage + tr.value;
}

struct EpisodeRecord {
  std::vector<Transition> transitions;
  std::vector<AuxSample> auxSamples;
  Metrics metrics;
  std::map<int64_t, int> schedule;  // job id -> start time
};

// One full episode under the model's stochastic (or deterministic) policy.
EpisodeRecord run_policy_episode(const Model& model,
                                 const WorkloadTrace& trace,
                                 const CapacitySeries& capacity,
                                 const RewardWeights& weights, uint64_t seed,
                                 bool deterministic, double rewardScale = 1.0,
                                 bool keepTransitions = true);

struct TracePool {
  std::vector<WorkloadTrace> traces;
  std::vector<CapacitySeries> capacities;

  size_t size() const { return traces.size(); }
};

// Runs episodes on `workers` threads until at least batchSize transitions
// are gathered. Episode seeds depend only on (config.seed, iteration,
// episode index), so the result is identical for any worker count.
TrajectoryBatch collect_rollouts(const Model& model, const TracePool& pool,
                                 const PpoConfig& config,
                                 const RewardWeights& weights,
                                 size_t iteration);

// Truncated GAE (forward recursion A_t = delta_t + gamma*lambda*A_{t+1})
// plus per-batch advantage normalization.
void compute_gae(TrajectoryBatch& batch, double gamma, double lambda,
                 bool normalize = true);

struct LossReport {
  double policyLoss = 0.0;  // negated mean clipped surrogate
  double valueLoss = 0.0;
  double meanRatio = 0.0;
  double clipFraction = 0.0;
};

LossReport ppo_update(const TrajectoryBatch& batch, Model& model,
                      const PpoConfig& config, double policyLr,
                      double valueLr, size_t iteration);

struct EvalResult {
  double mean = 0.0;
  double stddev = 0.0;
  Metrics averaged;
};

// n deterministic episodes (scores = policy mean, no exploration noise).
EvalResult evaluate(const Model& model, const TracePool& pool,
                    const RewardWeights& weights, size_t n);

struct IterationRow {
  size_t iter = 0;
  double policyLoss = 0.0;
  double valueLoss = 0.0;
  double auxLoss = 0.0;
  std::array<double, 4> auxTaskMse{};
  double evalMean = 0.0;
  double evalStd = 0.0;
  double utilization = 0.0;
  double timeDelay = 0.0;
  double violation = 0.0;
  double lrPolicy = 0.0;
  double lrValue = 0.0;
};

struct TrainResult {
  std::vector<IterationRow> log;
  EvalResult initialEval;
  EvalResult finalEval;
};

// Header matching write order of iteration_log_csv.
std::string iteration_log_csv(const std::vector<IterationRow>& log);

using CheckpointHook = std::function<void(size_t iter, const Model& model)>;

TrainResult train(Model& model, const TracePool& pool, const PpoConfig& config,
                  const RewardWeights& weights,
                  const CheckpointHook& checkpointHook = nullptr);

}  // namespace osdec
