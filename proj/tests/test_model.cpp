#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "doctest.h"
#include "osdec/errors.hpp"
#include "osdec/model.hpp"
#include "osdec/neuro/checkpoint.hpp"
#include "osdec/neuro/gradcheck.hpp"
#include "osdec/rng.hpp"
#include "osdec/simenv.hpp"
#include "osdec/workload.hpp"

using namespace osdec;

namespace {

ModelConfig tiny_config() {
  ModelConfig config;
  config.kMax = 4;
  config.dModel = 8;
  config.encoderLayers = 1;
  config.ffnHidden = 16;
  config.auxHiddenDim = 6;
  config.auxHistoryLen = 4;
  return config;
}

JobRequest job(int64_t id, int cores, int duration, int earliest, int latest,
               int submit) {
  return {id, cores, duration, earliest, latest, submit};
}

CapacitySeries constant_capacity(int horizon, int value) {
  return {std::vector<int>(static_cast<size_t>(horizon), value)};
}

Environment make_env(std::vector<JobRequest> jobs, int horizon, int capacity) {
  std::sort(jobs.begin(), jobs.end(),
            [](const JobRequest& a, const JobRequest& b) {
              return a.submit < b.submit;
            });
  return Environment(WorkloadTrace{jobs, horizon},
                     constant_capacity(horizon, capacity));
}

}  // namespace

TEST_CASE("featurize maps job fields into the designated slots") {
  const auto config = tiny_config();
  Model model(config, 5);
  auto env = make_env({job(1, 4, 5, 0, 2, 0)}, 12, 16);
  AuxState aux;
  aux.lowVec.assign(config.lowDim, 0.0);
  aux.highVec.assign(config.highDim, 0.0);
  const auto features = model.featurize(env, aux);

  REQUIRE(features.matrix.shape[0] == config.rowCount());
  // Current slots start at kMax; slot 0 of that block holds job 1.
  const size_t row = config.kMax;
  CHECK(features.mask[row] == 1);
  CHECK(features.currentIds[0] == 1);
  CHECK(features.matrix.at(row, 0) ==
        doctest::Approx(4.0 / config.coreScale));
  CHECK(features.matrix.at(row, 1) ==
        doctest::Approx(5.0 / config.durationScale));
  CHECK(features.matrix.at(row, 2) ==
        doctest::Approx(2.0 / config.timeScale));  // latest - t
  // One-hot set membership: current flag set, others clear.
  CHECK(features.matrix.at(row, 5) == doctest::Approx(0.0));  // historical
  CHECK(features.matrix.at(row, 6) == doctest::Approx(1.0));  // current
  CHECK(features.matrix.at(row, 7) == doctest::Approx(0.0));  // future
  // Global row is always unmasked and carries C_t.
  const size_t global = 3 * config.kMax;
  CHECK(features.mask[global] == 1);
  CHECK(features.matrix.at(global, 8) ==
        doctest::Approx(16.0 / config.capacityScale));
  // Empty-state featurization: only the global row survives.
  auto emptyEnv = make_env({}, 6, 4);
  const auto emptyFeatures = model.featurize(emptyEnv, aux);
  for (size_t r = 0; r < config.rowCount() - 1; ++r)
    CHECK(emptyFeatures.mask[r] == 0);
  CHECK(emptyFeatures.mask[config.rowCount() - 1] == 1);
}

TEST_CASE("featurize truncates to kMax by descending revenue") {
  const auto config = tiny_config();  // kMax = 4
  Model model(config, 5);
  std::vector<JobRequest> jobs;
  for (int i = 0; i < 7; ++i)
    jobs.push_back(job(i, i + 1, 1, 0, 9, 0));  // revenue = i + 1
  auto env = make_env(jobs, 12, 64);
  AuxState aux;
  aux.lowVec.assign(config.lowDim, 0.0);
  aux.highVec.assign(config.highDim, 0.0);
  const auto features = model.featurize(env, aux);
  CHECK(features.truncatedJobs == 3);
  // The 3 smallest-revenue jobs (ids 0,1,2) are dropped from view.
  std::vector<int64_t> kept(features.currentIds.begin(),
                            features.currentIds.end());
  std::sort(kept.begin(), kept.end());
  CHECK(kept == std::vector<int64_t>{3, 4, 5, 6});
}

TEST_CASE("aux vectors are appended scaled by the prior coefficients") {
  const auto config = tiny_config();
  Model model(config, 5);
  auto env = make_env({job(1, 2, 1, 0, 4, 0)}, 8, 8);
  AuxState aux;
  aux.lowVec.assign(config.lowDim, 0.25);
  aux.highVec.assign(config.highDim, -0.5);
  const auto features = model.featurize(env, aux);
  const size_t row = config.kMax;
  CHECK(features.matrix.at(row, 10) == doctest::Approx(0.25 * config.lowCoef));
  CHECK(features.matrix.at(row, 10 + config.lowDim) ==
        doctest::Approx(-0.5 * config.highCoef));
}

TEST_CASE("forward output ranges") {
  const auto config = tiny_config();
  Model model(config, 3);
  auto env = make_env({job(1, 2, 2, 0, 4, 0), job(2, 1, 3, 0, 4, 0)}, 8, 8);
  AuxState aux;
  aux.lowVec.assign(config.lowDim, 0.1);
  aux.highVec.assign(config.highDim, 0.1);
  const auto out = model.forward(model.featurize(env, aux));
  REQUIRE(out.mu.size() == config.kMax);
  for (size_t i = 0; i < config.kMax; ++i) {
    if (!out.mask[i]) continue;
    CHECK(out.mu[i] > -1.0);
    CHECK(out.mu[i] < 1.0);
    CHECK(out.sigma[i] >= config.sigmaMin);
  }
  CHECK(std::isfinite(out.value));
}

TEST_CASE("encoder is permutation-equivariant and mask-safe") {
  const auto config = tiny_config();
  Model model(config, 17);
  Rng rng(123);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<JobRequest> jobs;
    const int n = static_cast<int>(rng.uniform_int(2, 4));
    for (int i = 0; i < n; ++i)
      jobs.push_back(job(i, static_cast<int>(rng.uniform_int(1, 8)),
                         static_cast<int>(rng.uniform_int(1, 6)), 0, 9, 0));
    auto env = make_env(jobs, 12, 16);
    AuxState aux;
    aux.lowVec.assign(config.lowDim, 0.0);
    aux.highVec.assign(config.highDim, 0.0);
    auto features = model.featurize(env, aux);
    const auto base = model.forward(features);

    // Swap two current-job rows; mu/sigma must swap, value must not move.
    auto permuted = features;
    const size_t r0 = config.kMax, r1 = config.kMax + 1;
    for (size_t c = 0; c < config.featureDim(); ++c) {
      std::swap(permuted.matrix.values[r0 * config.featureDim() + c],
                permuted.matrix.values[r1 * config.featureDim() + c]);
    }
    std::swap(permuted.currentIds[0], permuted.currentIds[1]);
    const auto swapped = model.forward(permuted);
    CHECK(std::abs(swapped.mu[0] - base.mu[1]) < 1e-6);
    CHECK(std::abs(swapped.mu[1] - base.mu[0]) < 1e-6);
    CHECK(std::abs(swapped.sigma[0] - base.sigma[1]) < 1e-6);
    CHECK(std::abs(swapped.sigma[1] - base.sigma[0]) < 1e-6);
    CHECK(std::abs(swapped.value - base.value) < 1e-6);

    // Scribbling on a masked (padded) row changes nothing.
    auto scribbled = features;
    size_t padded = config.rowCount();
    for (size_t r = 0; r < config.rowCount(); ++r)
      if (!features.mask[r]) {
        padded = r;
        break;
      }
    REQUIRE(padded < config.rowCount());
    for (size_t c = 0; c < config.featureDim(); ++c)
      scribbled.matrix.values[padded * config.featureDim() + c] = 9.9;
    const auto masked = model.forward(scribbled);
    CHECK(std::abs(masked.value - base.value) < 1e-6);
    // Only unmasked slots must be unaffected; padded-slot outputs are
    // ignored by all consumers.
    for (size_t i = 0; i < config.kMax; ++i) {
      if (!features.currentMask[i]) continue;
      CHECK(std::abs(masked.mu[i] - base.mu[i]) < 1e-6);
      CHECK(std::abs(masked.sigma[i] - base.sigma[i]) < 1e-6);
    }
  }
}

TEST_CASE("score sampling and log probabilities") {
  PolicyOutput out;
  out.mu = {0.3, -0.2};
  out.sigma = {0.5, 0.5};
  out.mask = {1, 1};
  Rng rng(1);
  const auto [detCs, detLp] = Model::sample_scores(out, rng, true);
  CHECK(detCs[0] == doctest::Approx(0.3));
  CHECK(detCs[1] == doctest::Approx(-0.2));

  // K=1, mu=0, sigma=1, CS=0: logProb = -0.5 ln(2 pi).
  PolicyOutput unit;
  unit.mu = {0.0};
  unit.sigma = {1.0};
  unit.mask = {1};
  CHECK(Model::log_prob(unit, {0.0}) == doctest::Approx(-0.9189385332));

  // Quadrature: the K=1 density integrates to 1.
  double integral = 0.0;
  const double h = 1e-3;
  for (double x = -8.0; x < 8.0; x += h)
    integral += std::exp(Model::log_prob(unit, {x + h / 2})) * h;
  CHECK(integral == doctest::Approx(1.0).epsilon(1e-6));

  // Sampling statistics: empirical mean within 4 sigma / sqrt(n).
  const size_t n = 10000;
  double sum0 = 0.0, sum1 = 0.0;
  Rng rng2(99);
  for (size_t i = 0; i < n; ++i) {
    const auto [cs, lp] = Model::sample_scores(out, rng2, false);
    sum0 += cs[0];
    sum1 += cs[1];
    CHECK(lp == doctest::Approx(Model::log_prob(out, cs)));
  }
  const double bound = 4.0 * 0.5 / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(sum0 / n - 0.3) < bound);
  CHECK(std::abs(sum1 / n + 0.2) < bound);
}

TEST_CASE("scores_to_action sorts descending and takes the strict prefix") {
  const std::vector<JobRequest> jobs = {job(1, 2, 1, 0, 4, 0),
                                        job(2, 4, 1, 0, 4, 0),
                                        job(3, 6, 1, 0, 4, 0)};
  const std::vector<int64_t> slots = {1, 2, 3};
  CHECK(Model::scores_to_action({0.9, 0.5, 0.1}, slots, jobs, 8).jobIds ==
        std::vector<int64_t>{1, 2});
  CHECK(Model::scores_to_action({0.9, 0.5, 0.1}, slots, jobs, 0)
            .jobIds.empty());
  CHECK(Model::scores_to_action({0.9, 0.5, 0.1}, slots, jobs, -3)
            .jobIds.empty());
  // Equal scores: ascending id decides.
  CHECK(Model::scores_to_action({0.5, 0.5, 0.5}, slots, jobs, 6).jobIds ==
        std::vector<int64_t>{1, 2});
  // A big enough budget selects every current job.
  CHECK(Model::scores_to_action({0.1, 0.2, 0.3}, slots, jobs, 100)
            .jobIds.size() == 3);
  // Truncated jobs (not in any slot) are never selected.
  const std::vector<JobRequest> withExtra = {job(1, 2, 1, 0, 4, 0),
                                             job(2, 4, 1, 0, 4, 0),
                                             job(3, 6, 1, 0, 4, 0),
                                             job(4, 1, 1, 0, 4, 0)};
  const auto sel = Model::scores_to_action({0.9, 0.5, 0.1}, slots, withExtra,
                                           100);
  CHECK(std::find(sel.jobIds.begin(), sel.jobIds.end(), 4) ==
        sel.jobIds.end());
}

TEST_CASE("aux forward zero propagation and purity") {
  auto config = tiny_config();
  Model model(config, 2);
  // Zero every aux parameter: zero history must give zero predictions.
  for (auto& [name, tensor] : model.auxParams().params())
    std::fill(tensor.values.begin(), tensor.values.end(), 0.0);
  AuxState state;
  state.history.push_back(std::vector<double>(ModelConfig::kSummaryDim, 0.0));
  model.aux_forward(state);
  for (double p : state.predictions) CHECK(p == doctest::Approx(0.0));
  for (double v : state.lowVec) CHECK(v == doctest::Approx(0.0));
  for (double v : state.highVec) CHECK(v == doctest::Approx(0.0));

  Model fresh(config, 10);
  AuxState a, b;
  Rng rng(5);
  for (int step = 0; step < 3; ++step) {
    std::vector<double> summary(ModelConfig::kSummaryDim);
    for (auto& v : summary) v = rng.next_double();
    a.push_summary(summary, config.auxHistoryLen);
    b.push_summary(summary, config.auxHistoryLen);
  }
  fresh.aux_forward(a);
  fresh.aux_forward(b);
  CHECK(a.predictions == b.predictions);
  CHECK(a.lowVec == b.lowVec);
}

TEST_CASE("aux history ring respects its capacity") {
  AuxState state;
  for (int i = 0; i < 10; ++i)
    state.push_summary(std::vector<double>(ModelConfig::kSummaryDim,
                                           static_cast<double>(i)),
                       4);
  CHECK(state.history.size() == 4);
  CHECK(state.history.front()[0] == doctest::Approx(6.0));
  CHECK(state.history.back()[0] == doctest::Approx(9.0));
}

TEST_CASE("aux training drives the loss down on a fixed batch") {
  auto config = tiny_config();
  Model model(config, 9);
  Rng rng(40);
  std::vector<AuxSample> batch;
  for (int i = 0; i < 16; ++i) {
    AuxSample sample;
    for (size_t s = 0; s < config.auxHistoryLen; ++s) {
      std::vector<double> summary(ModelConfig::kSummaryDim);
      for (auto& v : summary) v = rng.next_double();
      sample.history.push_back(summary);
    }
    sample.targets = {0.5, 0.3, 0.2, 0.1};
    batch.push_back(sample);
  }
  const auto first = model.aux_train_step(batch, 1e-2);
  std::array<double, 4> last{};
  for (int step = 0; step < 100; ++step)
    last = model.aux_train_step(batch, 1e-2);
  for (size_t k = 0; k < 4; ++k) CHECK(last[k] < first[k]);
}

TEST_CASE("aux gradients match finite differences") {
  auto config = tiny_config();
  config.auxHiddenDim = 3;
  Model model(config, 6);
  Rng rng(14);
  std::vector<std::vector<double>> history;
  for (int s = 0; s < 3; ++s) {
    std::vector<double> summary(ModelConfig::kSummaryDim);
    for (auto& v : summary) v = rng.next_double();
    history.push_back(summary);
  }
  const std::array<double, 4> targets = {0.4, 0.1, -0.2, 0.3};

  auto buildLoss = [&](neuro::Tape& tape,
                       std::map<std::string, neuro::Tape::Ref>& refs) {
    const auto aux = model.build_aux_forward(tape, history, refs);
    neuro::Tape::Ref loss = tape.leaf(neuro::Tensor::scalar(0.0));
    for (size_t k = 0; k < 4; ++k)
      loss = tape.add(
          loss, tape.square(tape.add_const(aux.predictions[k], -targets[k])));
    return loss;
  };
  neuro::Tape tape;
  std::map<std::string, neuro::Tape::Ref> refs;
  const auto loss = buildLoss(tape, refs);
  tape.backward(loss);
  std::map<std::string, neuro::Tensor> grads;
  for (const auto& [name, ref] : refs) grads[name] = tape.grad(ref);
  auto forward = [&](const neuro::ParamStore& p) {
    // The model reads its own store; copy the perturbed values in.
    for (const auto& [name, tensor] : p.params())
      model.auxParams().at(name).values = tensor.values;
    neuro::Tape t2;
    std::map<std::string, neuro::Tape::Ref> r2;
    return t2.scalar(buildLoss(t2, r2));
  };
  neuro::ParamStore copy;
  for (const auto& [name, tensor] : model.auxParams().params())
    copy.add(name, tensor);
  CHECK(neuro::finite_diff_check(forward, copy, grads) < 1e-4);
}

TEST_CASE("full policy loss passes an end-to-end gradient check") {
  ModelConfig config = tiny_config();
  config.kMax = 3;
  config.dModel = 4;
  config.ffnHidden = 6;
  Model model(config, 8);
  auto env = make_env({job(1, 2, 2, 0, 4, 0), job(2, 1, 3, 0, 4, 0),
                       job(3, 3, 1, 1, 4, 1)},
                      8, 8);
  AuxState aux;
  aux.lowVec.assign(config.lowDim, 0.05);
  aux.highVec.assign(config.highDim, -0.05);
  const auto features = model.featurize(env, aux);
  const std::vector<double> cs = {0.2, -0.1, 0.0};

  auto buildLoss = [&](neuro::Tape& tape,
                       std::map<std::string, neuro::Tape::Ref>& refs) {
    const auto fwd = model.build_forward(tape, features, refs);
    const auto lp = model.build_log_prob(tape, fwd, cs, features.currentMask);
    const auto surrogate = tape.ppo_surrogate(lp, -2.0, 1.3, 0.2);
    // add a value-loss term so the value head is exercised too
    return tape.add(tape.scale(surrogate, -1.0),
                    tape.square(tape.add_const(fwd.value, -0.7)));
  };
  neuro::Tape tape;
  std::map<std::string, neuro::Tape::Ref> refs;
  tape.backward(buildLoss(tape, refs));
  std::map<std::string, neuro::Tensor> grads;
  for (const auto& [name, ref] : refs) grads[name] = tape.grad(ref);
  auto forward = [&](const neuro::ParamStore& p) {
    for (const auto& [name, tensor] : p.params())
      model.net().at(name).values = tensor.values;
    neuro::Tape t2;
    std::map<std::string, neuro::Tape::Ref> r2;
    return t2.scalar(buildLoss(t2, r2));
  };
  neuro::ParamStore copy;
  for (const auto& [name, tensor] : model.net().params())
    copy.add(name, tensor);
  CHECK(neuro::finite_diff_check(forward, copy, grads) < 1e-3);
}

TEST_CASE("model checkpoints round-trip through files") {
  const auto config = tiny_config();
  Model a(config, 44);
  Model b(config, 45);
  const std::string json = neuro::checkpoint_to_json(
      {{"net", &a.net()}, {"aux", &a.auxParams()}});
  neuro::checkpoint_from_json(json,
                              {{"net", &b.net()}, {"aux", &b.auxParams()}});
  auto env = make_env({job(1, 2, 2, 0, 4, 0)}, 8, 8);
  AuxState aux;
  aux.lowVec.assign(config.lowDim, 0.0);
  aux.highVec.assign(config.highDim, 0.0);
  const auto fa = a.forward(a.featurize(env, aux));
  const auto fb = b.forward(b.featurize(env, aux));
  CHECK(fa.mu == fb.mu);
  CHECK(fa.value == fb.value);
}
