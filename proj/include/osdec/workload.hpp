#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace osdec {

// One deferrable request. The start-time window is [earliest, latest];
// once started the job runs uninterrupted for `duration` steps.
struct JobRequest {
  int64_t id = 0;
  int cores = 1;     // requested CPU cores
  int duration = 1;  // time steps
  int earliest = 0;  // earliest start
  int latest = 0;    // latest start
  int submit = 0;    // submission time, submit <= earliest

  // Utilization credit for deploying this job.
  double revenue() const { return static_cast<double>(cores) * duration; }

  bool operator==(const JobRequest&) const = default;
};

struct WorkloadTrace {
  std::vector<JobRequest> jobs;  // sorted by submit time
  int horizon = 0;

  bool operator==(const WorkloadTrace&) const = default;
};

// Cores available to deferrable jobs per step (after on-demand usage).
struct CapacitySeries {
  std::vector<int> values;

  int at(int t) const { return values[static_cast<size_t>(t)]; }
  int horizon() const { return static_cast<int>(values.size()); }

  bool operator==(const CapacitySeries&) const = default;
};

// Parameters of the synthetic workload generator.
struct SyntheticSpec {
  int horizon = 96;
  double arrivalsPerStep = 0.4;
  std::vector<int> coreValues = {1, 2, 4, 8};
  std::vector<double> coreProbs = {0.51, 0.37, 0.08, 0.04};
  std::vector<int> durationValues = {1, 2, 3, 4, 5, 6};
  std::vector<double> durationProbs = {1.0 / 6, 1.0 / 6, 1.0 / 6,
                                       1.0 / 6, 1.0 / 6, 1.0 / 6};
  int maxWindow = 8;  // upper bound on latest - earliest
  int maxLead = 4;    // upper bound on earliest - submit
  int capacityBase = 16;
  double capacityFloorFrac = 0.3;  // walk clipped to [frac*base, base]
  int capacityWalkPeriod = 8;      // steps between walk moves
  uint64_t seed = 1;

  void validate() const;  // throws ValidationError
};

// Throws ValidationError on malformed rows or invariant violations.
// Expected header: id,submit,earliest,latest,duration,cores
// horizonOverride >= 0 replaces the default max(latest)+max(duration).
WorkloadTrace parse_jobs(const std::string& text, int horizonOverride = -1);

// Expected header: t,capacity with contiguous t starting at 0.
CapacitySeries parse_capacity(const std::string& text);

std::string serialize_jobs(const WorkloadTrace& trace);
std::string serialize_capacity(const CapacitySeries& series);

std::pair<WorkloadTrace, CapacitySeries> generate_workload(
    const SyntheticSpec& spec);

// Collapses every window to the submission instant: jobs must be deployed
// immediately upon submission or not at all.
WorkloadTrace to_realtime(const WorkloadTrace& trace);

}  // namespace osdec
