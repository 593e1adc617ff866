#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include "osdec/neuro/params.hpp"
#include "osdec/neuro/tape.hpp"
#include "osdec/rng.hpp"
#include "osdec/schedulers.hpp"
#include "osdec/simenv.hpp"

namespace osdec {

struct ModelConfig {
  size_t kMax = 32;          // job slots per partition fed to the network
  size_t dModel = 64;        // embedding width
  size_t encoderLayers = 2;
  size_t ffnHidden = 128;
  size_t heads = 1;          // single-head attention only
  size_t auxHiddenDim = 32;  // GRU hidden width
  size_t auxHistoryLen = 16;
  size_t highDim = 5;        // task-layer extract width
  size_t lowDim = 5;         // shared-layer extract width
  double highCoef = 10.0;    // feature-scale multipliers for the extracts
  double lowCoef = 10.0;
  double sigmaMin = 1e-3;

  // feature normalization scales
  double coreScale = 8.0;
  double durationScale = 6.0;
  double timeScale = 16.0;
  double capacityScale = 16.0;

  void validate() const;
  size_t rowCount() const { return 3 * kMax + 1; }  // job slots + global row
  size_t featureDim() const { return 10 + lowDim + highDim; }
  static constexpr size_t kSummaryDim = 8;  // aux history entry width
};

// Network encoding of one environment state: kMax rows per job partition
// (historical / current / future) and a trailing global capacity row.
struct JobFeatures {
  neuro::Tensor matrix;            // [3*kMax+1 x featureDim]
  std::vector<char> mask;          // row mask, padded rows are zero
  std::vector<int64_t> currentIds; // job id per current slot, -1 when padded
  std::vector<char> currentMask;
  size_t truncatedJobs = 0;        // jobs dropped from the network view
};

struct PolicyOutput {
  std::vector<double> mu;     // per current-job slot
  std::vector<double> sigma;  // >= sigmaMin
  double value = 0.0;
  std::vector<char> mask;     // current slot mask
};

// Rolling input and cached extracts of the auxiliary prediction module.
struct AuxState {
  std::deque<std::vector<double>> history;  // per-step summary vectors
  std::vector<double> lowVec;
  std::vector<double> highVec;
  std::array<double, 4> predictions{};  // capacity, avg cores, avg dur,
                                        // violation penalty (normalized)

  void push_summary(std::vector<double> summary, size_t maxLen);
};

struct AuxSample {
  std::vector<std::vector<double>> history;
  std::array<double, 4> targets{};
};

class Model {
 public:
  Model(ModelConfig config, uint64_t seed);

  const ModelConfig& config() const { return config_; }
  neuro::ParamStore& net() { return net_; }
  const neuro::ParamStore& net() const { return net_; }
  neuro::ParamStore& auxParams() { return aux_; }
  const neuro::ParamStore& auxParams() const { return aux_; }

  JobFeatures featurize(const Environment& env, const AuxState& aux) const;

  // Pre-action statistics captured before Environment::step mutates state.
  struct StepSnapshot {
    size_t nCurrent = 0;
    double avgCores = 0.0;
    double avgDuration = 0.0;
    int capacity = 0;
    int freeCapacity = 0;
  };
  static StepSnapshot snapshot(const Environment& env);

  // Per-step summary appended to the aux history after acting.
  std::vector<double> step_summary(const StepSnapshot& before,
                                   size_t nSelected, int selectedCores,
                                   const StepOutcome& outcome) const;
  // Normalized prediction targets: next-step capacity, average cores and
  // duration of the next current set, and the next step's realized
  // violation penalty.
  std::array<double, 4> aux_targets(const StepSnapshot& next,
                                    const StepOutcome& nextOutcome) const;

  PolicyOutput forward(const JobFeatures& features) const;
  void aux_forward(AuxState& state) const;

  // Graph-building variants used for training. paramRefs maps parameter
  // names to their leaf nodes so gradients can be collected after backward.
  struct ForwardRefs {
    neuro::Tape::Ref mu;     // [kMax x 1]
    neuro::Tape::Ref sigma;  // [kMax x 1]
    neuro::Tape::Ref value;  // [1 x 1]
  };
  ForwardRefs build_forward(neuro::Tape& tape, const JobFeatures& features,
                            std::map<std::string, neuro::Tape::Ref>& paramRefs)
      const;
  // Scalar log-probability of the given scores under the policy output.
  neuro::Tape::Ref build_log_prob(neuro::Tape& tape, const ForwardRefs& refs,
                                  const std::vector<double>& cs,
                                  const std::vector<char>& currentMask) const;
  struct AuxRefs {
    neuro::Tape::Ref low;
    neuro::Tape::Ref high;
    std::array<neuro::Tape::Ref, 4> predictions;
  };
  AuxRefs build_aux_forward(neuro::Tape& tape,
                            const std::vector<std::vector<double>>& history,
                            std::map<std::string, neuro::Tape::Ref>& paramRefs)
      const;

  // One Adam step on the aux parameters only; returns the per-task MSEs
  // measured before the update.
  std::array<double, 4> aux_train_step(const std::vector<AuxSample>& batch,
                                       double lr);

  static std::pair<std::vector<double>, double> sample_scores(
      const PolicyOutput& out, Rng& rng, bool deterministic);
  static double log_prob(const PolicyOutput& out,
                         const std::vector<double>& cs);

  // Sort slot scores descending (ties by ascending id) and take the strict
  // capacity prefix. Current jobs truncated out of the network view are
  // never selected.
  static Selection scores_to_action(const std::vector<double>& cs,
                                    const std::vector<int64_t>& slotIds,
                                    const std::vector<JobRequest>& currentJobs,
                                    int freeCapacity);

 private:
  ModelConfig config_;
  neuro::ParamStore net_;
  neuro::ParamStore aux_;
};

}  // namespace osdec
