#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "osdec/simenv.hpp"
#include "osdec/workload.hpp"

namespace osdec {

enum class SchedulerKind { FIFO, SJF, HRRN, TETRIS, RANDOM };

SchedulerKind scheduler_kind_from_string(const std::string& name);
std::string to_string(SchedulerKind kind);

// Longest strict prefix of `orderedJobs` whose core sum fits the budget;
// jobs after the first overflow are not considered.
Selection select_prefix(const std::vector<JobRequest>& orderedJobs,
                        int budget);

// Greedy variant that skips past overflowing jobs; not the default
// deployment rule, available for ablation.
Selection select_greedy(const std::vector<JobRequest>& orderedJobs,
                        int budget);

// Scheduler-specific priority; jobs are deployed in descending score order.
double heuristic_score(SchedulerKind kind, const Environment& env,
                       const JobRequest& job);

// Current jobs in deployment order for the given heuristic (descending
// score with the documented tie-breaks).
std::vector<JobRequest> order_jobs(SchedulerKind kind, const Environment& env,
                                   uint64_t stepSeed);

struct EpisodeResult {
  Metrics metrics;
  std::map<int64_t, int> schedule;  // job id -> start time
};

EpisodeResult run_heuristic(SchedulerKind kind, const WorkloadTrace& trace,
                            const CapacitySeries& capacity,
                            const RewardWeights& weights = {},
                            uint64_t seed = 0, bool greedyPrefix = false);

}  // namespace osdec
