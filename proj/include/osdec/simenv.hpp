#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "osdec/workload.hpp"

namespace osdec {

// Reward coefficients: omega1 penalizes deployment delay, omega2 penalizes
// capacity violations.
struct RewardWeights {
  double omega1 = 2.0;
  double omega2 = 10.0;
};

struct RunningJob {
  JobRequest job;
  int startedAt = 0;
  int endsAt = 0;  // startedAt + duration, exclusive
};

struct StepOutcome {
  double reward = 0.0;
  double revenue = 0.0;
  double delayPenalty = 0.0;
  double violationPenalty = 0.0;
  int violation = 0;  // cores over capacity at this step
  std::set<int64_t> expiredThisStep;
};

struct Metrics {
  double utilization = 0.0;      // sum of revenue
  double timeDelay = 0.0;        // -sum of delay penalties
  double violationPenalty = 0.0;
  double totalReward = 0.0;
};

Metrics episode_metrics(const std::vector<StepOutcome>& outcomes);

// Ordered subset of the current job ids chosen for deployment at one step.
struct Selection {
  std::vector<int64_t> jobIds;
};

// Discrete-time scheduling environment. The job pool at step t is
// partitioned into: historical (deployed, still running), current
// (earliest <= t <= latest, undeployed), and future (submitted, earliest > t).
class Environment {
 public:
  Environment(WorkloadTrace trace, CapacitySeries capacity);

  void reset();
  StepOutcome step(const Selection& sel, const RewardWeights& weights);

  bool done() const { return t_ >= trace_.horizon; }
  int t() const { return t_; }
  int horizon() const { return trace_.horizon; }
  int capacityNow() const { return capacityNow_; }
  int occupied_cores() const;
  // May be negative after a capacity drop below running occupancy.
  int free_capacity() const { return capacityNow_ - occupied_cores(); }
  int violation() const;

  const std::vector<RunningJob>& historical() const { return historical_; }
  const std::vector<JobRequest>& current() const { return current_; }
  const std::vector<JobRequest>& future() const { return future_; }
  const std::set<int64_t>& expired() const { return expired_; }
  const std::map<int64_t, int>& deployedLog() const { return deployedLog_; }
  const WorkloadTrace& trace() const { return trace_; }

 private:
  void refresh_partitions();

  WorkloadTrace trace_;
  CapacitySeries capacity_;
  int t_ = 0;
  int capacityNow_ = 0;
  std::vector<RunningJob> historical_;
  std::vector<JobRequest> current_;
  std::vector<JobRequest> future_;
  std::set<int64_t> expired_;
  std::map<int64_t, int> deployedLog_;
  size_t nextArrival_ = 0;  // index of the first not-yet-submitted job
};

}  // namespace osdec
