#include "osdec/config.hpp"

#include <fstream>
#include <set>

#include "json.hpp"
#include "osdec/errors.hpp"

namespace osdec {
namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& known,
                    const std::string& where) {
  for (const auto& [key, _] : obj.items())
    if (!known.count(key))
      throw ValidationError("unknown config key '" + where + key + "'");
}

template <typename T>
void read(const json& obj, const char* key, T& into) {
  if (!obj.contains(key)) return;
  try {
    into = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(std::string("config key '") + key +
                          "' has the wrong type");
  }
}

void parse_synthetic(const json& obj, SyntheticSpec& spec) {
  reject_unknown(obj,
                 {"horizon", "arrivals_per_step", "core_values", "core_probs",
                  "duration_values", "duration_probs", "max_window",
                  "max_lead", "capacity_base", "capacity_floor_frac",
                  "capacity_walk_period"},
                 "synthetic.");
  read(obj, "horizon", spec.horizon);
  read(obj, "arrivals_per_step", spec.arrivalsPerStep);
  read(obj, "core_values", spec.coreValues);
  read(obj, "core_probs", spec.coreProbs);
  read(obj, "duration_values", spec.durationValues);
  read(obj, "duration_probs", spec.durationProbs);
  read(obj, "max_window", spec.maxWindow);
  read(obj, "max_lead", spec.maxLead);
  read(obj, "capacity_base", spec.capacityBase);
  read(obj, "capacity_floor_frac", spec.capacityFloorFrac);
  read(obj, "capacity_walk_period", spec.capacityWalkPeriod);
}

void parse_model(const json& obj, ModelConfig& m) {
  reject_unknown(obj,
                 {"k_max", "d_model", "encoder_layers", "ffn_hidden", "heads",
                  "aux_hidden_dim", "aux_history_len", "high_dim", "low_dim",
                  "high_coef", "low_coef", "sigma_min", "core_scale",
                  "duration_scale", "time_scale", "capacity_scale"},
                 "model.");
  read(obj, "k_max", m.kMax);
  read(obj, "d_model", m.dModel);
  read(obj, "encoder_layers", m.encoderLayers);
  read(obj, "ffn_hidden", m.ffnHidden);
  read(obj, "heads", m.heads);
  read(obj, "aux_hidden_dim", m.auxHiddenDim);
  read(obj, "aux_history_len", m.auxHistoryLen);
  read(obj, "high_dim", m.highDim);
  read(obj, "low_dim", m.lowDim);
  read(obj, "high_coef", m.highCoef);
  read(obj, "low_coef", m.lowCoef);
  read(obj, "sigma_min", m.sigmaMin);
  read(obj, "core_scale", m.coreScale);
  read(obj, "duration_scale", m.durationScale);
  read(obj, "time_scale", m.timeScale);
  read(obj, "capacity_scale", m.capacityScale);
}

void parse_ppo(const json& obj, PpoConfig& p) {
  reject_unknown(
      obj, {"gamma", "lambda", "epsilon", "batch_size", "minibatch_size",
            "policy_lr_start", "policy_lr_end", "value_lr_start",
            "value_lr_end", "aux_lr_start", "aux_lr_end", "workers",
            "epochs_per_update", "iterations", "eval_trajectories",
            "eval_every", "checkpoint_every", "normalize_advantages",
            "reward_scale"},
      "ppo.");
  read(obj, "gamma", p.gamma);
  read(obj, "lambda", p.lambda);
  read(obj, "epsilon", p.epsilon);
  read(obj, "batch_size", p.batchSize);
  read(obj, "minibatch_size", p.minibatchSize);
  read(obj, "policy_lr_start", p.policyLrStart);
  read(obj, "policy_lr_end", p.policyLrEnd);
  read(obj, "value_lr_start", p.valueLrStart);
  read(obj, "value_lr_end", p.valueLrEnd);
  read(obj, "aux_lr_start", p.auxLrStart);
  read(obj, "aux_lr_end", p.auxLrEnd);
  read(obj, "workers", p.workers);
  read(obj, "epochs_per_update", p.epochsPerUpdate);
  read(obj, "iterations", p.iterations);
  read(obj, "eval_trajectories", p.evalTrajectories);
  read(obj, "eval_every", p.evalEvery);
  read(obj, "checkpoint_every", p.checkpointEvery);
  read(obj, "normalize_advantages", p.normalizeAdvantages);
  read(obj, "reward_scale", p.rewardScale);
}

}  // namespace

TracePool ExperimentConfig::build_trace_pool() const {
  TracePool pool;
  for (size_t i = 0; i < trainTraces; ++i) {
    SyntheticSpec spec = synthetic;
    spec.seed = trace_seed(i);
    auto [trace, capacity] = generate_workload(spec);
    pool.traces.push_back(std::move(trace));
    pool.capacities.push_back(std::move(capacity));
  }
  return pool;
}

ExperimentConfig parse_experiment_config(const std::string& jsonText) {
  json doc;
  try {
    doc = json::parse(jsonText);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config parse error: ") + e.what());
  }
  reject_unknown(doc,
                 {"version", "seed", "omega1", "omega2", "synthetic", "model",
                  "ppo", "train_traces"},
                 "");
  ExperimentConfig cfg;
  read(doc, "version", cfg.version);
  if (cfg.version != 1)
    throw ValidationError("unsupported config version " +
                          std::to_string(cfg.version));
  read(doc, "seed", cfg.seed);
  read(doc, "omega1", cfg.weights.omega1);
  read(doc, "omega2", cfg.weights.omega2);
  read(doc, "train_traces", cfg.trainTraces);
  if (doc.contains("synthetic")) parse_synthetic(doc["synthetic"], cfg.synthetic);
  if (doc.contains("model")) parse_model(doc["model"], cfg.model);
  if (doc.contains("ppo")) parse_ppo(doc["ppo"], cfg.ppo);
  cfg.synthetic.validate();
  cfg.model.validate();
  cfg.ppo.validate();
  cfg.ppo.seed = cfg.ppo_seed();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config file " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_experiment_config(text);
}

std::string experiment_config_to_json(const ExperimentConfig& c) {
  json doc;
  doc["version"] = c.version;
  doc["seed"] = c.seed;
  doc["omega1"] = c.weights.omega1;
  doc["omega2"] = c.weights.omega2;
  doc["train_traces"] = c.trainTraces;
  doc["synthetic"] = {{"horizon", c.synthetic.horizon},
                      {"arrivals_per_step", c.synthetic.arrivalsPerStep},
                      {"core_values", c.synthetic.coreValues},
                      {"core_probs", c.synthetic.coreProbs},
                      {"duration_values", c.synthetic.durationValues},
                      {"duration_probs", c.synthetic.durationProbs},
                      {"max_window", c.synthetic.maxWindow},
                      {"max_lead", c.synthetic.maxLead},
                      {"capacity_base", c.synthetic.capacityBase},
                      {"capacity_floor_frac", c.synthetic.capacityFloorFrac},
                      {"capacity_walk_period", c.synthetic.capacityWalkPeriod}};
  doc["model"] = json::parse(model_config_to_json(c.model));
  doc["ppo"] = {{"gamma", c.ppo.gamma},
                {"lambda", c.ppo.lambda},
                {"epsilon", c.ppo.epsilon},
                {"batch_size", c.ppo.batchSize},
                {"minibatch_size", c.ppo.minibatchSize},
                {"policy_lr_start", c.ppo.policyLrStart},
                {"policy_lr_end", c.ppo.policyLrEnd},
                {"value_lr_start", c.ppo.valueLrStart},
                {"value_lr_end", c.ppo.valueLrEnd},
                {"aux_lr_start", c.ppo.auxLrStart},
                {"aux_lr_end", c.ppo.auxLrEnd},
                {"workers", c.ppo.workers},
                {"epochs_per_update", c.ppo.epochsPerUpdate},
                {"iterations", c.ppo.iterations},
                {"eval_trajectories", c.ppo.evalTrajectories},
                {"eval_every", c.ppo.evalEvery},
                {"checkpoint_every", c.ppo.checkpointEvery},
                {"normalize_advantages", c.ppo.normalizeAdvantages},
                {"reward_scale", c.ppo.rewardScale}};
  return doc.dump(2);
}

std::string model_config_to_json(const ModelConfig& m) {
  json doc = {{"k_max", m.kMax},
              {"d_model", m.dModel},
              {"encoder_layers", m.encoderLayers},
              {"ffn_hidden", m.ffnHidden},
              {"heads", m.heads},
              {"aux_hidden_dim", m.auxHiddenDim},
              {"aux_history_len", m.auxHistoryLen},
              {"high_dim", m.highDim},
              {"low_dim", m.lowDim},
              {"high_coef", m.highCoef},
              {"low_coef", m.lowCoef},
              {"sigma_min", m.sigmaMin},
              {"core_scale", m.coreScale},
              {"duration_scale", m.durationScale},
              {"time_scale", m.timeScale},
              {"capacity_scale", m.capacityScale}};
  return doc.dump(2);
}

ModelConfig model_config_from_json(const std::string& jsonText) {
  json doc;
  try {
    doc = json::parse(jsonText);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("model config parse error: ") + e.what());
  }
  ModelConfig m;
  parse_model(doc, m);
  m.validate();
  return m;
}

}  // namespace osdec
