#include "osdec/simenv.hpp"

#include <algorithm>
#include <string>

#include "osdec/errors.hpp"

namespace osdec {

Metrics episode_metrics(const std::vector<StepOutcome>& outcomes) {
  Metrics m;
  for (const auto& o : outcomes) {
    m.utilization += o.revenue;
    m.timeDelay -= o.delayPenalty;
    m.violationPenalty += o.violationPenalty;
    m.totalReward += o.reward;
  }
  return m;
}

Environment::Environment(WorkloadTrace trace, CapacitySeries capacity)
    : trace_(std::move(trace)), capacity_(std::move(capacity)) {
  if (capacity_.horizon() < trace_.horizon)
    throw ValidationError("capacity series shorter than trace horizon (" +
                          std::to_string(capacity_.horizon()) + " < " +
                          std::to_string(trace_.horizon) + ")");
  reset();
}

void Environment::reset() {
  t_ = 0;
  historical_.clear();
  current_.clear();
  future_.clear();
  expired_.clear();
  deployedLog_.clear();
  nextArrival_ = 0;
  capacityNow_ = trace_.horizon > 0 ? capacity_.at(0) : 0;
  refresh_partitions();
}

int Environment::occupied_cores() const {
  int total = 0;
  for (const auto& r : historical_)
    if (r.startedAt <= t_ && t_ < r.endsAt) total += r.job.cores;
  return total;
}

int Environment::violation() const {
  return std::max(0, occupied_cores() - capacityNow_);
}

void Environment::refresh_partitions() {
  // Ingest newly submitted jobs.
  while (nextArrival_ < trace_.jobs.size() &&
         trace_.jobs[nextArrival_].submit <= t_) {
    const JobRequest& j = trace_.jobs[nextArrival_++];
    if (j.earliest > t_)
      future_.push_back(j);
    else
      current_.push_back(j);
  }
  // Promote future jobs whose window has opened.
  for (auto it = future_.begin(); it != future_.end();) {
    if (it->earliest <= t_) {
      current_.push_back(*it);
      it = future_.erase(it);
    } else {
      ++it;
    }
  }
  // Drop finished running jobs.
  std::erase_if(historical_,
                [this](const RunningJob& r) { return r.endsAt <= t_; });
  // Keep the current set in ascending id order so episodes are deterministic.
  std::sort(current_.begin(), current_.end(),
            [](const JobRequest& a, const JobRequest& b) { return a.id < b.id; });
  if (t_ < trace_.horizon) capacityNow_ = capacity_.at(t_);
}

StepOutcome Environment::step(const Selection& sel,
                              const RewardWeights& weights) {
  if (done()) throw ContractError("step() called on a finished episode");

  const int budget = std::max(0, free_capacity());
  int selectedCores = 0;
  std::vector<JobRequest> chosen;
  chosen.reserve(sel.jobIds.size());
  for (int64_t id : sel.jobIds) {
    auto it = std::find_if(current_.begin(), current_.end(),
                           [id](const JobRequest& j) { return j.id == id; });
    if (it == current_.end())
      throw ContractError("selected job " + std::to_string(id) +
                          " is not in the current set at t=" +
                          std::to_string(t_));
    for (const auto& c : chosen)
      if (c.id == id)
        throw ContractError("job " + std::to_string(id) +
                            " selected twice in one step");
    selectedCores += it->cores;
    chosen.push_back(*it);
  }
  if (selectedCores > budget)
    throw ContractError("selection needs " + std::to_string(selectedCores) +
                        " cores but only " + std::to_string(budget) +
                        " are free at t=" + std::to_string(t_));

  StepOutcome out;
  for (const auto& j : chosen) {
    historical_.push_back({j, t_, t_ + j.duration});
    deployedLog_[j.id] = t_;
    std::erase_if(current_,
                  [&](const JobRequest& c) { return c.id == j.id; });
    out.revenue += j.revenue();
    out.delayPenalty += weights.omega1 * (t_ - j.earliest);
  }
  out.violation = violation();
  out.violationPenalty = weights.omega2 * out.violation;
  out.reward = out.revenue - out.delayPenalty - out.violationPenalty;

  // Jobs whose window closes this step expire with zero reward.
  for (auto it = current_.begin(); it != current_.end();) {
    if (it->latest <= t_) {
      expired_.insert(it->id);
      out.expiredThisStep.insert(it->id);
      it = current_.erase(it);
    } else {
      ++it;
    }
  }

  ++t_;
  refresh_partitions();
  return out;
}

}  // namespace osdec
