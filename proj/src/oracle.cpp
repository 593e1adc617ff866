#include "osdec/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "osdec/errors.hpp"

namespace osdec {
namespace {

constexpr int kUnscheduled = std::numeric_limits<int>::max();

struct SearchState {
  const OfflineInstance* instance = nullptr;
  std::vector<int> order;       // job indices, descending revenue
  std::vector<int> occupancy;   // cores in use per step
  std::vector<double> suffixRevenue;  // optimistic bound helper
  std::vector<int> starts;      // per job index, kUnscheduled if skipped
  double value = 0.0;

  double best = -std::numeric_limits<double>::infinity();
  std::vector<int> bestStarts;

  double violation_delta(const JobRequest& j, int start, int sign) const {
    // Change in omega2 * sum_t max(0, occ_t - C_t) caused by adding
    // (sign=+1) or removing (sign=-1) the job's occupancy.
    double delta = 0.0;
    const int end = std::min(start + j.duration, instance->horizon);
    for (int t = start; t < end; ++t) {
      const int cap = instance->capacity.at(t);
      const int before = occupancy[static_cast<size_t>(t)];
      const int after = before + sign * j.cores;
      delta += std::max(0, after - cap) - std::max(0, before - cap);
    }
    return instance->weights.omega2 * delta;
  }

  bool lex_smaller(const std::vector<int>& a,
                   const std::vector<int>& b) const {
    // Compare start-time vectors in ascending job-id order. `starts` is
    // indexed by position in the (id-sorted) instance job list already.
    for (size_t i = 0; i < a.size(); ++i)
      if (a[i] != b[i]) return a[i] < b[i];
    return false;
  }

  void dfs(size_t depth) {
    if (depth == order.size()) {
      if (value > best + 1e-9 ||
          (value > best - 1e-9 && lex_smaller(starts, bestStarts))) {
        best = value;
        bestStarts = starts;
      }
      return;
    }
    if (value + suffixRevenue[depth] < best - 1e-9) return;

    const int jobIdx = order[depth];
    const JobRequest& j = instance->jobs[static_cast<size_t>(jobIdx)];
    const int lastStart = std::min(j.latest, instance->horizon - 1);
    for (int start = j.earliest; start <= lastStart; ++start) {
      const double gain = j.revenue() -
                          instance->weights.omega1 * (start - j.earliest) -
                          apply(j, start);
      value += gain;
      starts[static_cast<size_t>(jobIdx)] = start;
      dfs(depth + 1);
      value -= gain;
      unapply(j, start);
      starts[static_cast<size_t>(jobIdx)] = kUnscheduled;
    }
    dfs(depth + 1);  // leave the job unscheduled
  }

 private:
  double apply(const JobRequest& j, int start) {
    const double penalty = violation_delta(j, start, +1);
    const int end = std::min(start + j.duration, instance->horizon);
    for (int t = start; t < end; ++t)
      occupancy[static_cast<size_t>(t)] += j.cores;
    return penalty;
  }

  void unapply(const JobRequest& j, int start) {
    const int end = std::min(start + j.duration, instance->horizon);
    for (int t = start; t < end; ++t)
      occupancy[static_cast<size_t>(t)] -= j.cores;
  }
};

}  // namespace

OfflineInstance OfflineInstance::from(const WorkloadTrace& trace,
                                      const CapacitySeries& capacity,
                                      const RewardWeights& weights) {
  OfflineInstance inst;
  inst.jobs = trace.jobs;
  std::sort(inst.jobs.begin(), inst.jobs.end(),
            [](const JobRequest& a, const JobRequest& b) { return a.id < b.id; });
  inst.capacity = capacity;
  inst.weights = weights;
  inst.horizon = trace.horizon;
  return inst;
}

double objective(const OfflineInstance& instance, const OfflinePlan& plan) {
  std::vector<int> occupancy(static_cast<size_t>(instance.horizon), 0);
  double total = 0.0;
  for (const auto& [id, start] : plan.startTimes) {
    auto it = std::find_if(instance.jobs.begin(), instance.jobs.end(),
                           [id](const JobRequest& j) { return j.id == id; });
    if (it == instance.jobs.end())
      throw ContractError("plan schedules unknown job " + std::to_string(id));
    if (start < it->earliest || start > it->latest)
      throw ContractError("start " + std::to_string(start) +
                          " outside window of job " + std::to_string(id));
    total += it->revenue() - instance.weights.omega1 * (start - it->earliest);
    const int end = std::min(start + it->duration, instance.horizon);
    for (int t = start; t < end; ++t)
      occupancy[static_cast<size_t>(t)] += it->cores;
  }
  for (int t = 0; t < instance.horizon; ++t)
    total -= instance.weights.omega2 *
             std::max(0, occupancy[static_cast<size_t>(t)] -
                             instance.capacity.at(t));
  return total;
}

OfflinePlan solve_exact(const OfflineInstance& instance, double budget) {
  double product = 1.0;
  for (const auto& j : instance.jobs) {
    product *= static_cast<double>(j.latest - j.earliest + 2);
    if (product > budget)
      throw ValidationError(
          "instance exceeds the exact-solver budget of " +
          std::to_string(static_cast<long long>(budget)) +
          " candidate assignments; reduce the job count or windows");
  }

  SearchState s;
  s.instance = &instance;
  s.occupancy.assign(static_cast<size_t>(instance.horizon), 0);
  s.starts.assign(instance.jobs.size(), kUnscheduled);
  s.bestStarts = s.starts;
  s.best = -std::numeric_limits<double>::infinity();

  s.order.resize(instance.jobs.size());
  for (size_t i = 0; i < s.order.size(); ++i) s.order[i] = static_cast<int>(i);
  std::sort(s.order.begin(), s.order.end(), [&](int a, int b) {
    const double ra = instance.jobs[static_cast<size_t>(a)].revenue();
    const double rb = instance.jobs[static_cast<size_t>(b)].revenue();
    if (ra != rb) return ra > rb;
    return instance.jobs[static_cast<size_t>(a)].id <
           instance.jobs[static_cast<size_t>(b)].id;
  });
  s.suffixRevenue.assign(instance.jobs.size() + 1, 0.0);
  for (size_t i = instance.jobs.size(); i-- > 0;)
    s.suffixRevenue[i] =
        s.suffixRevenue[i + 1] +
        instance.jobs[static_cast<size_t>(s.order[i])].revenue();

  s.dfs(0);

  OfflinePlan plan;
  for (size_t i = 0; i < instance.jobs.size(); ++i)
    if (s.bestStarts[i] != kUnscheduled)
      plan.startTimes[instance.jobs[i].id] = s.bestStarts[i];
  plan.objective = instance.jobs.empty() ? 0.0 : s.best;
  return plan;
}

std::pair<double, double> compare_deferrable_realtime(
    const WorkloadTrace& trace, const CapacitySeries& capacity,
    double omega2, double budget) {
  RewardWeights w;
  w.omega1 = 0.0;
  w.omega2 = omega2;
  const auto deferrable =
      solve_exact(OfflineInstance::from(trace, capacity, w), budget);
  const auto realtime = solve_exact(
      OfflineInstance::from(to_realtime(trace), capacity, w), budget);
  return {deferrable.objective, realtime.objective};
}

}  // namespace osdec
