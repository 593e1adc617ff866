#include "osdec/schedulers.hpp"

#include <algorithm>
#include <stdexcept>

#include "osdec/errors.hpp"
#include "osdec/rng.hpp"

namespace osdec {

SchedulerKind scheduler_kind_from_string(const std::string& name) {
  if (name == "fifo") return SchedulerKind::FIFO;
  if (name == "sjf") return SchedulerKind::SJF;
  if (name == "hrrn") return SchedulerKind::HRRN;
  if (name == "tetris") return SchedulerKind::TETRIS;
  if (name == "random") return SchedulerKind::RANDOM;
  throw ValidationError("unknown scheduler kind '" + name + "'");
}

std::string to_string(SchedulerKind kind) {
  switch (kind) {
    case SchedulerKind::FIFO: return "fifo";
    case SchedulerKind::SJF: return "sjf";
    case SchedulerKind::HRRN: return "hrrn";
    case SchedulerKind::TETRIS: return "tetris";
    case SchedulerKind::RANDOM: return "random";
  }
  return "?";
}

Selection select_prefix(const std::vector<JobRequest>& orderedJobs,
                        int budget) {
  Selection sel;
  int remaining = std::max(0, budget);
  for (const auto& j : orderedJobs) {
    if (j.cores > remaining) break;  // strict prefix: stop at first overflow
    remaining -= j.cores;
    sel.jobIds.push_back(j.id);
  }
  return sel;
}

Selection select_greedy(const std::vector<JobRequest>& orderedJobs,
                        int budget) {
  Selection sel;
  int remaining = std::max(0, budget);
  for (const auto& j : orderedJobs) {
    if (j.cores > remaining) continue;
    remaining -= j.cores;
    sel.jobIds.push_back(j.id);
  }
  return sel;
}

double heuristic_score(SchedulerKind kind, const Environment& env,
                       const JobRequest& job) {
  switch (kind) {
    case SchedulerKind::FIFO:
      return -static_cast<double>(job.earliest);
    case SchedulerKind::SJF:
      return -static_cast<double>(job.duration);
    case SchedulerKind::HRRN:
      // response ratio = (waiting time + duration) / duration
      return (static_cast<double>(env.t() - job.earliest) + job.duration) /
             job.duration;
    case SchedulerKind::TETRIS:
      // Single-resource packing alignment plus a shortest-job tie bias.
      return static_cast<double>(job.cores) *
                 std::max(0, env.free_capacity()) +
             1.0 / job.duration;
    case SchedulerKind::RANDOM:
      throw ContractError("random scores are drawn per step, not per job");
  }
  return 0.0;
}

std::vector<JobRequest> order_jobs(SchedulerKind kind, const Environment& env,
                                   uint64_t stepSeed) {
  std::vector<JobRequest> jobs = env.current();
  if (kind == SchedulerKind::RANDOM) {
    Rng rng(stepSeed);
    std::vector<std::pair<double, JobRequest>> scored;
    scored.reserve(jobs.size());
    for (const auto& j : jobs) scored.emplace_back(rng.next_double(), j);
    std::sort(scored.begin(), scored.end(),
              [](const auto& a, const auto& b) {
                return a.first != b.first ? a.first > b.first
                                          : a.second.id < b.second.id;
              });
    for (size_t i = 0; i < jobs.size(); ++i) jobs[i] = scored[i].second;
    return jobs;
  }
  std::sort(jobs.begin(), jobs.end(),
            [&](const JobRequest& a, const JobRequest& b) {
              const double sa = heuristic_score(kind, env, a);
              const double sb = heuristic_score(kind, env, b);
              if (sa != sb) return sa > sb;
              if (kind == SchedulerKind::FIFO && a.submit != b.submit)
                return a.submit < b.submit;
              return a.id < b.id;
            });
  return jobs;
}

EpisodeResult run_heuristic(SchedulerKind kind, const WorkloadTrace& trace,
                            const CapacitySeries& capacity,
                            const RewardWeights& weights, uint64_t seed,
                            bool greedyPrefix) {
  Environment env(trace, capacity);
  std::vector<StepOutcome> outcomes;
  outcomes.reserve(static_cast<size_t>(trace.horizon));
  while (!env.done()) {
    const auto ordered =
        order_jobs(kind, env, derive_seed(seed, /*purpose=*/3,
                                          static_cast<uint64_t>(env.t())));
    const Selection sel = greedyPrefix
                              ? select_greedy(ordered, env.free_capacity())
                              : select_prefix(ordered, env.free_capacity());
    outcomes.push_back(env.step(sel, weights));
  }
  return {episode_metrics(outcomes), env.deployedLog()};
}

}  // namespace osdec
