#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "osdec/simenv.hpp"
#include "osdec/workload.hpp"

namespace osdec {

struct OfflineInstance {
  std::vector<JobRequest> jobs;
  CapacitySeries capacity;
  RewardWeights weights;
  int horizon = 0;

  static OfflineInstance from(const WorkloadTrace& trace,
                              const CapacitySeries& capacity,
                              const RewardWeights& weights = {});
};

struct OfflinePlan {
  // Absent entry = never scheduled.
  std::map<int64_t, int> startTimes;
  double objective = 0.0;
};

// Offline objective: sum over scheduled jobs of (revenue - omega1*delay)
// minus omega2 * total capacity violation induced by the plan's occupancy.
// Throws ContractError if the plan breaks a window constraint.
double objective(const OfflineInstance& instance, const OfflinePlan& plan);

// Exact maximizer by depth-first branch and bound; each job either starts
// somewhere in its window (clipped to the horizon) or stays unscheduled.
// Ties are broken by the lexicographically earliest start-time vector over
// ascending job id (unscheduled compares last). Throws ValidationError when
// the candidate-assignment product exceeds the budget.
OfflinePlan solve_exact(const OfflineInstance& instance,
                        double budget = 2e6);

// Oracle objectives with omega1 = 0 on the original windows and on the
// realtime (window collapsed to submission) variant of the same trace.
std::pair<double, double> compare_deferrable_realtime(
    const WorkloadTrace& trace, const CapacitySeries& capacity,
    double omega2, double budget = 2e6);

}  // namespace osdec
