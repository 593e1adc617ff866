#include "osdec/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "osdec/errors.hpp"

namespace osdec {

using neuro::Tape;
using neuro::Tensor;

namespace {

constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5 * ln(2*pi)

// Leafs each parameter at most once per tape and remembers the node so the
// caller can read gradients back by name.
struct TapeParams {
  Tape& tape;
  const neuro::ParamStore& store;
  std::map<std::string, Tape::Ref>& refs;

  Tape::Ref operator()(const std::string& name) {
    auto it = refs.find(name);
    if (it != refs.end()) return it->second;
    const Tape::Ref r = tape.leaf(store.at(name));
    refs.emplace(name, r);
    return r;
  }
};

// Indices of the kept jobs (at most kMax) in the original order; drops the
// smallest-revenue jobs first.
template <typename T>
std::vector<size_t> keep_top_revenue(const std::vector<T>& items, size_t kMax,
                                     double (*revenue)(const T&),
                                     int64_t (*ident)(const T&)) {
  std::vector<size_t> idx(items.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (items.size() <= kMax) return idx;
  std::vector<size_t> byRevenue = idx;
  std::sort(byRevenue.begin(), byRevenue.end(), [&](size_t a, size_t b) {
    const double ra = revenue(items[a]), rb = revenue(items[b]);
    if (ra != rb) return ra > rb;
    return ident(items[a]) < ident(items[b]);
  });
  byRevenue.resize(kMax);
  std::vector<char> keep(items.size(), 0);
  for (size_t i : byRevenue) keep[i] = 1;
  std::vector<size_t> kept;
  for (size_t i : idx)
    if (keep[i]) kept.push_back(i);
  return kept;
}

}  // namespace

void ModelConfig::validate() const {
  if (kMax < 1 || dModel < 1 || encoderLayers < 1 || ffnHidden < 1 ||
      auxHiddenDim < 1 || auxHistoryLen < 1 || highDim < 1 || lowDim < 1)
    throw ValidationError("model dimensions must be positive");
  if (heads != 1) throw ValidationError("only single-head attention is supported");
  if (sigmaMin <= 0.0) throw ValidationError("sigmaMin must be positive");
  if (coreScale <= 0.0 || durationScale <= 0.0 || timeScale <= 0.0 ||
      capacityScale <= 0.0)
    throw ValidationError("feature scales must be positive");
}

void AuxState::push_summary(std::vector<double> summary, size_t maxLen) {
  history.push_back(std::move(summary));
  while (history.size() > maxLen) history.pop_front();
}

Model::Model(ModelConfig config, uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  const size_t d = config_.dModel;
  const size_t f = config_.featureDim();
  const size_t ff = config_.ffnHidden;

  Rng netRng(derive_seed(seed, /*purpose=*/10, 0));
  auto w = [&](const std::string& name, size_t rows, size_t cols) {
    net_.add_random(name, {rows, cols}, 1.0 / std::sqrt(static_cast<double>(rows)),
                    netRng);
  };
  w("embed.W", f, d);
  net_.add("embed.b", Tensor::zeros({1, d}));
  for (size_t l = 0; l < config_.encoderLayers; ++l) {
    const std::string p = "enc" + std::to_string(l) + ".";
    w(p + "attn.wq", d, d);
    w(p + "attn.wk", d, d);
    w(p + "attn.wv", d, d);
    net_.add(p + "ln1.g", Tensor{{1, d}, std::vector<double>(d, 1.0)});
    net_.add(p + "ln1.b", Tensor::zeros({1, d}));
    w(p + "ffn.w1", d, ff);
    net_.add(p + "ffn.b1", Tensor::zeros({1, ff}));
    w(p + "ffn.w2", ff, d);
    net_.add(p + "ffn.b2", Tensor::zeros({1, d}));
    net_.add(p + "ln2.g", Tensor{{1, d}, std::vector<double>(d, 1.0)});
    net_.add(p + "ln2.b", Tensor::zeros({1, d}));
  }
  for (const std::string head : {"mu", "sigma"}) {
    w("policy." + head + ".w1", d, ff);
    net_.add("policy." + head + ".b1", Tensor::zeros({1, ff}));
    w("policy." + head + ".w2", ff, 1);
    net_.add("policy." + head + ".b2", Tensor::zeros({1, 1}));
  }
  w("value.w", d, 1);
  net_.add("value.b", Tensor::zeros({1, 1}));

  Rng auxRng(derive_seed(seed, /*purpose=*/11, 0));
  const size_t s = ModelConfig::kSummaryDim;
  const size_t ah = config_.auxHiddenDim;
  auto aw = [&](const std::string& name, size_t rows, size_t cols) {
    aux_.add_random(name, {rows, cols},
                    1.0 / std::sqrt(static_cast<double>(rows)), auxRng);
  };
  for (const std::string gate : {"z", "r", "h"}) {
    aw("gru.w" + gate, s, ah);
    aw("gru.u" + gate, ah, ah);
    aux_.add("gru.b" + gate, Tensor::zeros({1, ah}));
  }
  aw("shared.w", ah, config_.lowDim);
  aux_.add("shared.b", Tensor::zeros({1, config_.lowDim}));
  for (int k = 0; k < 4; ++k) {
    const std::string p = "task" + std::to_string(k) + ".";
    aw(p + "w", config_.lowDim, config_.highDim);
    aux_.add(p + "b", Tensor::zeros({1, config_.highDim}));
    aw(p + "head.w", config_.highDim, 1);
    aux_.add_random(p + "head.b", {1, 1}, 0.1, auxRng);
  }
  aw("high.w", 4 * config_.highDim, config_.highDim);
  aux_.add("high.b", Tensor::zeros({1, config_.highDim}));
}

JobFeatures Model::featurize(const Environment& env,
                             const AuxState& aux) const {
  const size_t kMax = config_.kMax;
  JobFeatures f;
  f.matrix = Tensor::zeros({config_.rowCount(), config_.featureDim()});
  f.mask.assign(config_.rowCount(), 0);
  f.currentIds.assign(kMax, -1);
  f.currentMask.assign(kMax, 0);

  const double t = env.t();
  std::vector<double> low(config_.lowDim, 0.0), high(config_.highDim, 0.0);
  for (size_t i = 0; i < config_.lowDim && i < aux.lowVec.size(); ++i)
    low[i] = aux.lowVec[i] * config_.lowCoef;
  for (size_t i = 0; i < config_.highDim && i < aux.highVec.size(); ++i)
    high[i] = aux.highVec[i] * config_.highCoef;

  auto fill_common = [&](size_t row, const JobRequest& j, size_t setIndex) {
    f.matrix.at(row, 0) = j.cores / config_.coreScale;
    f.matrix.at(row, 1) = j.duration / config_.durationScale;
    f.matrix.at(row, 5 + setIndex) = 1.0;
    for (size_t i = 0; i < config_.lowDim; ++i)
      f.matrix.at(row, 10 + i) = low[i];
    for (size_t i = 0; i < config_.highDim; ++i)
      f.matrix.at(row, 10 + config_.lowDim + i) = high[i];
    f.mask[row] = 1;
  };

  const auto& hist = env.historical();
  auto histKept = keep_top_revenue<RunningJob>(
      hist, kMax, [](const RunningJob& r) { return r.job.revenue(); },
      [](const RunningJob& r) { return r.job.id; });
  f.truncatedJobs += hist.size() - histKept.size();
  for (size_t slot = 0; slot < histKept.size(); ++slot) {
    const RunningJob& r = hist[histKept[slot]];
    fill_common(slot, r.job, 0);
    f.matrix.at(slot, 4) = (r.endsAt - t) / config_.timeScale;
  }

  const auto& cur = env.current();
  auto curKept = keep_top_revenue<JobRequest>(
      cur, kMax, [](const JobRequest& j) { return j.revenue(); },
      [](const JobRequest& j) { return j.id; });
  f.truncatedJobs += cur.size() - curKept.size();
  for (size_t slot = 0; slot < curKept.size(); ++slot) {
    const JobRequest& j = cur[curKept[slot]];
    const size_t row = kMax + slot;
    fill_common(row, j, 1);
    f.matrix.at(row, 2) = (j.latest - t) / config_.timeScale;
    f.currentIds[slot] = j.id;
    f.currentMask[slot] = 1;
  }

  const auto& fut = env.future();
  auto futKept = keep_top_revenue<JobRequest>(
      fut, kMax, [](const JobRequest& j) { return j.revenue(); },
      [](const JobRequest& j) { return j.id; });
  f.truncatedJobs += fut.size() - futKept.size();
  for (size_t slot = 0; slot < futKept.size(); ++slot) {
    const JobRequest& j = fut[futKept[slot]];
    const size_t row = 2 * kMax + slot;
    fill_common(row, j, 2);
    f.matrix.at(row, 3) = (j.earliest - t) / config_.timeScale;
  }

  const size_t globalRow = 3 * kMax;
  f.matrix.at(globalRow, 8) = env.capacityNow() / config_.capacityScale;
  f.matrix.at(globalRow, 9) = env.free_capacity() / config_.capacityScale;
  for (size_t i = 0; i < config_.lowDim; ++i)
    f.matrix.at(globalRow, 10 + i) = low[i];
  for (size_t i = 0; i < config_.highDim; ++i)
    f.matrix.at(globalRow, 10 + config_.lowDim + i) = high[i];
  f.mask[globalRow] = 1;
  return f;
}

Model::StepSnapshot Model::snapshot(const Environment& env) {
  StepSnapshot s;
  s.nCurrent = env.current().size();
  for (const auto& j : env.current()) {
    s.avgCores += j.cores;
    s.avgDuration += j.duration;
  }
  if (s.nCurrent > 0) {
    s.avgCores /= static_cast<double>(s.nCurrent);
    s.avgDuration /= static_cast<double>(s.nCurrent);
  }
  s.capacity = env.capacityNow();
  s.freeCapacity = env.free_capacity();
  return s;
}

std::vector<double> Model::step_summary(const StepSnapshot& before,
                                        size_t nSelected, int selectedCores,
                                        const StepOutcome& outcome) const {
  return {static_cast<double>(before.nCurrent) / config_.kMax,
          static_cast<double>(nSelected) / config_.kMax,
          selectedCores / config_.capacityScale,
          before.capacity / config_.capacityScale,
          outcome.violation / config_.capacityScale,
          before.avgCores / config_.coreScale,
          before.avgDuration / config_.durationScale,
          before.freeCapacity / config_.capacityScale};
}

std::array<double, 4> Model::aux_targets(const StepSnapshot& next,
                                         const StepOutcome& nextOutcome) const {
  return {next.capacity / config_.capacityScale,
          next.avgCores / config_.coreScale,
          next.avgDuration / config_.durationScale,
          nextOutcome.violationPenalty / config_.capacityScale};
}

Model::ForwardRefs Model::build_forward(
    Tape& tape, const JobFeatures& features,
    std::map<std::string, Tape::Ref>& paramRefs) const {
  TapeParams P{tape, net_, paramRefs};
  const size_t kMax = config_.kMax;

  Tape::Ref h = tape.linear(tape.leaf(features.matrix), P("embed.W"),
                            P("embed.b"));
  for (size_t l = 0; l < config_.encoderLayers; ++l) {
    const std::string p = "enc" + std::to_string(l) + ".";
    Tape::Ref a = tape.self_attention(h, P(p + "attn.wq"), P(p + "attn.wk"),
                                      P(p + "attn.wv"), features.mask);
    h = tape.layer_norm(tape.add(h, a), P(p + "ln1.g"), P(p + "ln1.b"));
    Tape::Ref ff = tape.linear(
        tape.tanh_op(tape.linear(h, P(p + "ffn.w1"), P(p + "ffn.b1"))),
        P(p + "ffn.w2"), P(p + "ffn.b2"));
    h = tape.layer_norm(tape.add(h, ff), P(p + "ln2.g"), P(p + "ln2.b"));
  }

  Tape::Ref cur = tape.slice_rows(h, kMax, kMax);
  auto head = [&](const std::string& name) {
    return tape.linear(
        tape.tanh_op(tape.linear(cur, P("policy." + name + ".w1"),
                                 P("policy." + name + ".b1"))),
        P("policy." + name + ".w2"), P("policy." + name + ".b2"));
  };
  ForwardRefs out;
  out.mu = tape.tanh_op(head("mu"));
  out.sigma = tape.add_const(tape.softplus_op(head("sigma")), config_.sigmaMin);

  size_t unmasked = 0;
  for (char m : features.mask) unmasked += m != 0;
  Tape::Ref vRows = tape.mask_rows(
      tape.linear(h, P("value.w"), P("value.b")), features.mask);
  out.value = tape.scale(tape.sum(vRows), 1.0 / static_cast<double>(unmasked));
  return out;
}

PolicyOutput Model::forward(const JobFeatures& features) const {
  Tape tape;
  std::map<std::string, Tape::Ref> refs;
  const ForwardRefs r = build_forward(tape, features, refs);
  PolicyOutput out;
  out.mu = tape.value(r.mu).values;
  out.sigma = tape.value(r.sigma).values;
  out.value = tape.scalar(r.value);
  out.mask = features.currentMask;
  return out;
}

Tape::Ref Model::build_log_prob(Tape& tape, const ForwardRefs& refs,
                                const std::vector<double>& cs,
                                const std::vector<char>& currentMask) const {
  if (cs.size() != config_.kMax)
    throw ShapeError("log_prob: score vector must cover every slot");
  Tape::Ref csLeaf = tape.leaf(Tensor{{config_.kMax, 1}, cs});
  Tape::Ref z = tape.div(tape.sub(csLeaf, refs.mu), refs.sigma);
  Tape::Ref perSlot = tape.add_const(
      tape.sub(tape.scale(tape.square(z), -0.5), tape.log_op(refs.sigma)),
      -kHalfLog2Pi);
  return tape.sum(tape.mask_rows(perSlot, currentMask));
}

Model::AuxRefs Model::build_aux_forward(
    Tape& tape, const std::vector<std::vector<double>>& history,
    std::map<std::string, Tape::Ref>& paramRefs) const {
  TapeParams P{tape, aux_, paramRefs};
  const size_t steps = config_.auxHistoryLen;
  const size_t s = ModelConfig::kSummaryDim;

  Tape::Ref h = tape.leaf(Tensor::zeros({1, config_.auxHiddenDim}));
  // zero-pad short histories at the front
  const size_t pad = history.size() < steps ? steps - history.size() : 0;
  const size_t skip = history.size() > steps ? history.size() - steps : 0;
  for (size_t i = 0; i < steps; ++i) {
    std::vector<double> entry(s, 0.0);
    if (i >= pad) entry = history[skip + i - pad];
    if (entry.size() != s)
      throw ShapeError("aux history entry has wrong width");
    Tape::Ref x = tape.leaf(Tensor::row(entry));
    h = tape.gru_cell(x, h, P("gru.wz"), P("gru.uz"), P("gru.bz"),
                      P("gru.wr"), P("gru.ur"), P("gru.br"), P("gru.wh"),
                      P("gru.uh"), P("gru.bh"));
  }

  AuxRefs out;
  out.low = tape.tanh_op(tape.linear(h, P("shared.w"), P("shared.b")));
  std::vector<Tape::Ref> taskLayers;
  for (int k = 0; k < 4; ++k) {
    const std::string p = "task" + std::to_string(k) + ".";
    Tape::Ref tk =
        tape.tanh_op(tape.linear(out.low, P(p + "w"), P(p + "b")));
    taskLayers.push_back(tk);
    out.predictions[static_cast<size_t>(k)] =
        tape.linear(tk, P(p + "head.w"), P(p + "head.b"));
  }
  out.high = tape.tanh_op(
      tape.linear(tape.concat_cols(taskLayers), P("high.w"), P("high.b")));
  return out;
}

void Model::aux_forward(AuxState& state) const {
  Tape tape;
  std::map<std::string, Tape::Ref> refs;
  std::vector<std::vector<double>> history(state.history.begin(),
                                           state.history.end());
  const AuxRefs r = build_aux_forward(tape, history, refs);
  state.lowVec = tape.value(r.low).values;
  state.highVec = tape.value(r.high).values;
  for (size_t k = 0; k < 4; ++k)
    state.predictions[k] = tape.scalar(r.predictions[k]);
}

std::array<double, 4> Model::aux_train_step(const std::vector<AuxSample>& batch,
                                            double lr) {
  if (batch.empty()) return {0.0, 0.0, 0.0, 0.0};
  Tape tape;
  std::map<std::string, Tape::Ref> refs;
  std::array<std::vector<Tape::Ref>, 4> squaredErrors;
  for (const auto& sample : batch) {
    const AuxRefs r = build_aux_forward(tape, sample.history, refs);
    for (size_t k = 0; k < 4; ++k) {
      Tape::Ref err =
          tape.add_const(r.predictions[k], -sample.targets[k]);
      squaredErrors[k].push_back(tape.square(err));
    }
  }
  std::array<double, 4> mse{};
  Tape::Ref total = -1;
  for (size_t k = 0; k < 4; ++k) {
    Tape::Ref acc = squaredErrors[k][0];
    for (size_t i = 1; i < squaredErrors[k].size(); ++i)
      acc = tape.add(acc, squaredErrors[k][i]);
    acc = tape.scale(acc, 1.0 / static_cast<double>(batch.size()));
    mse[k] = tape.scalar(acc);
    total = total < 0 ? acc : tape.add(total, acc);
  }
  if (!std::isfinite(tape.scalar(total)))
    throw NumericError("non-finite auxiliary loss");
  tape.backward(total);

  std::map<std::string, Tensor> grads;
  for (const auto& [name, ref] : refs) grads[name] = tape.grad(ref);
  aux_.adam_step(grads, lr);
  return mse;
}

std::pair<std::vector<double>, double> Model::sample_scores(
    const PolicyOutput& out, Rng& rng, bool deterministic) {
  std::vector<double> cs(out.mu.size(), 0.0);
  for (size_t i = 0; i < out.mu.size(); ++i) {
    if (!out.mask.empty() && !out.mask[i]) continue;
    cs[i] = deterministic ? out.mu[i]
                          : out.mu[i] + out.sigma[i] * rng.gaussian();
  }
  return {cs, log_prob(out, cs)};
}

double Model::log_prob(const PolicyOutput& out, const std::vector<double>& cs) {
  double lp = 0.0;
  for (size_t i = 0; i < out.mu.size(); ++i) {
    if (!out.mask.empty() && !out.mask[i]) continue;
    const double z = (cs[i] - out.mu[i]) / out.sigma[i];
    lp += -0.5 * z * z - std::log(out.sigma[i]) - kHalfLog2Pi;
  }
  return lp;
}

Selection Model::scores_to_action(const std::vector<double>& cs,
                                  const std::vector<int64_t>& slotIds,
                                  const std::vector<JobRequest>& currentJobs,
                                  int freeCapacity) {
  std::vector<std::pair<double, JobRequest>> scored;
  scored.reserve(currentJobs.size());
  for (const auto& j : currentJobs) {
    double score = -std::numeric_limits<double>::infinity();
    for (size_t slot = 0; slot < slotIds.size(); ++slot)
      if (slotIds[slot] == j.id) {
        score = cs[slot];
        break;
      }
    scored.emplace_back(score, j);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second.id < b.second.id;
  });
  std::vector<JobRequest> ordered;
  ordered.reserve(scored.size());
  for (auto& [score, job] : scored) {
    if (std::isinf(score) && score < 0) continue;  // truncated: never selected
    ordered.push_back(job);
  }
  return select_prefix(ordered, freeCapacity);
}

}  // namespace osdec
