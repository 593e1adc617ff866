#include "osdec/workload.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <sstream>
#include <string>

#include "osdec/errors.hpp"
#include "osdec/rng.hpp"

namespace osdec {
namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

int64_t parse_int(const std::string& s, int lineNo) {
  size_t pos = 0;
  int64_t v = 0;
  try {
    v = std::stoll(s, &pos);
  } catch (const std::exception&) {
    throw ValidationError("line " + std::to_string(lineNo) +
                          ": not an integer: '" + s + "'");
  }
  if (pos != s.size())
    throw ValidationError("line " + std::to_string(lineNo) +
                          ": trailing characters in '" + s + "'");
  return v;
}

std::vector<std::string> read_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void validate_job(const JobRequest& j) {
  const std::string who = "job " + std::to_string(j.id);
  if (j.cores < 1) throw ValidationError("cores < 1 for " + who);
  if (j.duration < 1) throw ValidationError("duration < 1 for " + who);
  if (j.submit < 0) throw ValidationError("negative submit for " + who);
  if (j.earliest > j.latest)
    throw ValidationError("earliest > latest for " + who);
  if (j.submit > j.earliest)
    throw ValidationError("submit > earliest for " + who);
}

}  // namespace

void SyntheticSpec::validate() const {
  auto check_dist = [](const std::vector<int>& values,
                       const std::vector<double>& probs, const char* name) {
    if (values.empty())
      throw ValidationError(std::string(name) + " values empty");
    if (values.size() != probs.size())
      throw ValidationError(std::string(name) +
                            " values/probs length mismatch");
    double sum = 0.0;
    for (double p : probs) {
      if (p < 0.0) throw ValidationError(std::string(name) + " prob < 0");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw ValidationError(std::string(name) + " probs do not sum to 1");
    for (int v : values)
      if (v < 1) throw ValidationError(std::string(name) + " value < 1");
  };
  check_dist(coreValues, coreProbs, "core");
  check_dist(durationValues, durationProbs, "duration");
  if (horizon < 1) throw ValidationError("horizon < 1");
  if (arrivalsPerStep < 0.0) throw ValidationError("arrivalsPerStep < 0");
  if (maxWindow < 0) throw ValidationError("maxWindow < 0");
  if (maxLead < 0) throw ValidationError("maxLead < 0");
  if (capacityBase < 1) throw ValidationError("capacityBase < 1");
  if (capacityFloorFrac < 0.0 || capacityFloorFrac > 1.0)
    throw ValidationError("capacityFloorFrac outside [0,1]");
  if (capacityWalkPeriod < 1) throw ValidationError("capacityWalkPeriod < 1");
}

WorkloadTrace parse_jobs(const std::string& text, int horizonOverride) {
  const auto lines = read_lines(text);
  if (lines.empty() || lines[0] != "id,submit,earliest,latest,duration,cores")
    throw ValidationError(
        "job CSV must start with header id,submit,earliest,latest,duration,cores");

  WorkloadTrace trace;
  std::set<int64_t> seen;
  for (size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const int lineNo = static_cast<int>(i) + 1;
    const auto fields = split_csv_line(lines[i]);
    if (fields.size() != 6)
      throw ValidationError("line " + std::to_string(lineNo) +
                            ": expected 6 fields, got " +
                            std::to_string(fields.size()));
    JobRequest j;
    j.id = parse_int(fields[0], lineNo);
    j.submit = static_cast<int>(parse_int(fields[1], lineNo));
    j.earliest = static_cast<int>(parse_int(fields[2], lineNo));
    j.latest = static_cast<int>(parse_int(fields[3], lineNo));
    j.duration = static_cast<int>(parse_int(fields[4], lineNo));
    j.cores = static_cast<int>(parse_int(fields[5], lineNo));
    if (j.submit > j.earliest)
      throw ValidationError("submit > earliest for job " + std::to_string(j.id));
    validate_job(j);
    if (!seen.insert(j.id).second)
      throw ValidationError("duplicate job id " + std::to_string(j.id));
    trace.jobs.push_back(j);
  }

  std::stable_sort(trace.jobs.begin(), trace.jobs.end(),
                   [](const JobRequest& a, const JobRequest& b) {
                     return a.submit != b.submit ? a.submit < b.submit
                                                 : a.id < b.id;
                   });
  if (horizonOverride >= 0) {
    trace.horizon = horizonOverride;
  } else if (!trace.jobs.empty()) {
    int maxLatest = 0, maxDuration = 0;
    for (const auto& j : trace.jobs) {
      maxLatest = std::max(maxLatest, j.latest);
      maxDuration = std::max(maxDuration, j.duration);
    }
    trace.horizon = maxLatest + maxDuration;
  }
  return trace;
}

CapacitySeries parse_capacity(const std::string& text) {
  const auto lines = read_lines(text);
  if (lines.empty() || lines[0] != "t,capacity")
    throw ValidationError("capacity CSV must start with header t,capacity");

  CapacitySeries series;
  int expected = 0;
  for (size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const int lineNo = static_cast<int>(i) + 1;
    const auto fields = split_csv_line(lines[i]);
    if (fields.size() != 2)
      throw ValidationError("line " + std::to_string(lineNo) +
                            ": expected 2 fields");
    const int64_t t = parse_int(fields[0], lineNo);
    const int64_t cap = parse_int(fields[1], lineNo);
    if (t > expected)
      throw ValidationError("missing time step " + std::to_string(expected));
    if (t < expected)
      throw ValidationError("duplicate or out-of-order time step " +
                            std::to_string(t));
    if (cap < 0)
      throw ValidationError("negative capacity at t=" + std::to_string(t));
    series.values.push_back(static_cast<int>(cap));
    ++expected;
  }
  return series;
}

std::string serialize_jobs(const WorkloadTrace& trace) {
  std::ostringstream out;
  out << "id,submit,earliest,latest,duration,cores\n";
  for (const auto& j : trace.jobs)
    out << j.id << ',' << j.submit << ',' << j.earliest << ',' << j.latest
        << ',' << j.duration << ',' << j.cores << '\n';
  return out.str();
}

std::string serialize_capacity(const CapacitySeries& series) {
  std::ostringstream out;
  out << "t,capacity\n";
  for (size_t t = 0; t < series.values.size(); ++t)
    out << t << ',' << series.values[t] << '\n';
  return out.str();
}

std::pair<WorkloadTrace, CapacitySeries> generate_workload(
    const SyntheticSpec& spec) {
  spec.validate();

  Rng jobRng(derive_seed(spec.seed, /*purpose=*/1, 0));
  WorkloadTrace trace;
  trace.horizon = spec.horizon;
  int64_t nextId = 0;
  for (int t = 0; t < spec.horizon; ++t) {
    const int arrivals = jobRng.poisson(spec.arrivalsPerStep);
    for (int a = 0; a < arrivals; ++a) {
      JobRequest j;
      j.id = nextId++;
      j.submit = t;
      j.cores = spec.coreValues[jobRng.categorical(spec.coreProbs)];
      j.duration = spec.durationValues[jobRng.categorical(spec.durationProbs)];
      j.earliest =
          j.submit + static_cast<int>(jobRng.uniform_int(0, spec.maxLead));
      j.latest =
          j.earliest + static_cast<int>(jobRng.uniform_int(0, spec.maxWindow));
      trace.jobs.push_back(j);
    }
  }

  // Piecewise-constant random walk clipped to [floorFrac*base, base].
  Rng capRng(derive_seed(spec.seed, /*purpose=*/2, 0));
  CapacitySeries series;
  series.values.reserve(static_cast<size_t>(spec.horizon));
  const double floorCap = spec.capacityFloorFrac * spec.capacityBase;
  double level = spec.capacityBase;
  for (int t = 0; t < spec.horizon; ++t) {
    if (t % spec.capacityWalkPeriod == 0 && t > 0) {
      level += (capRng.next_double() - 0.5) * spec.capacityBase * 0.5;
      level = std::clamp(level, floorCap,
                         static_cast<double>(spec.capacityBase));
    }
    series.values.push_back(static_cast<int>(std::lround(level)));
  }
  return {std::move(trace), std::move(series)};
}

WorkloadTrace to_realtime(const WorkloadTrace& trace) {
  WorkloadTrace out = trace;
  for (auto& j : out.jobs) {
    j.earliest = j.submit;
    j.latest = j.submit;
  }
  return out;
}

}  // namespace osdec
