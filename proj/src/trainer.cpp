#include "osdec/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include "osdec/errors.hpp"
#include "osdec/neuro/tape.hpp"

namespace osdec {

using neuro::Tape;
using neuro::Tensor;

void PpoConfig::validate() const {
  if (gamma <= 0.0 || gamma > 1.0) throw ValidationError("gamma outside (0,1]");
  if (lambda < 0.0 || lambda > 1.0) throw ValidationError("lambda outside [0,1]");
  if (epsilon <= 0.0 || epsilon >= 1.0)
    throw ValidationError("epsilon outside (0,1)");
  if (batchSize == 0 || minibatchSize == 0)
    throw ValidationError("batch sizes must be positive");
  if (batchSize % minibatchSize != 0)
    throw ValidationError("batchSize must be divisible by minibatchSize");
  if (workers == 0) throw ValidationError("workers must be positive");
  if (epochsPerUpdate == 0) throw ValidationError("epochsPerUpdate must be positive");
  if (rewardScale <= 0.0) throw ValidationError("rewardScale must be positive");
}

namespace {

double lerp_schedule(double start, double end, size_t iter, size_t total) {
  if (total <= 1) return start;
  const double frac =
      static_cast<double>(iter) / static_cast<double>(total - 1);
  return start + (end - start) * frac;
}

}  // namespace

double PpoConfig::policy_lr(size_t iter) const {
  return lerp_schedule(policyLrStart, policyLrEnd, iter, iterations);
}
double PpoConfig::value_lr(size_t iter) const {
  return lerp_schedule(valueLrStart, valueLrEnd, iter, iterations);
}
double PpoConfig::aux_lr(size_t iter) const {
  return lerp_schedule(auxLrStart, auxLrEnd, iter, iterations);
}

EpisodeRecord run_policy_episode(const Model& model, const WorkloadTrace& trace,
                                 const CapacitySeries& capacity,
                                 const RewardWeights& weights, uint64_t seed,
                                 bool deterministic, double rewardScale,
                                 bool keepTransitions) {
  Environment env(trace, capacity);
  Rng rng(seed);
  AuxState auxState;
  EpisodeRecord record;
  std::vector<StepOutcome> outcomes;
  outcomes.reserve(static_cast<size_t>(trace.horizon));

  while (!env.done()) {
    model.aux_forward(auxState);
    const JobFeatures features = model.featurize(env, auxState);
    const PolicyOutput out = model.forward(features);
    const auto [cs, logProb] = Model::sample_scores(out, rng, deterministic);
    const Selection sel = Model::scores_to_action(
        cs, features.currentIds, env.current(), env.free_capacity());

    const Model::StepSnapshot before = Model::snapshot(env);
    int selectedCores = 0;
    for (int64_t id : sel.jobIds)
      for (const auto& j : env.current())
        if (j.id == id) selectedCores += j.cores;

    // The aux module saw history up to the previous step; its targets are
    // this step's realized values.
    AuxSample auxSample;
    auxSample.history.assign(auxState.history.begin(), auxState.history.end());

    const StepOutcome outcome = env.step(sel, weights);
    outcomes.push_back(outcome);
    auxState.push_summary(
        model.step_summary(before, sel.jobIds.size(), selectedCores, outcome),
        model.config().auxHistoryLen);

    auxSample.targets = model.aux_targets(before, outcome);
    record.auxSamples.push_back(std::move(auxSample));

    if (keepTransitions) {
      Transition tr;
      tr.features = features;
      tr.cs = cs;
      tr.logProbOld = logProb;
      tr.reward = outcome.reward * rewardScale;
      tr.value = out.value;
      tr.done = env.done();
      record.transitions.push_back(std::move(tr));
    }
  }
  record.metrics = episode_metrics(outcomes);
  record.schedule = env.deployedLog();
  return record;
}

TrajectoryBatch collect_rollouts(const Model& model, const TracePool& pool,
                                 const PpoConfig& config,
                                 const RewardWeights& weights,
                                 size_t iteration) {
  if (pool.size() == 0) throw ContractError("empty trace pool");
  const uint64_t iterSeed = derive_seed(config.seed, /*purpose=*/20, iteration);

  // Fix the episode list up front so the batch is independent of scheduling.
  std::vector<size_t> episodeTraces;
  size_t plannedTransitions = 0;
  while (plannedTransitions < config.batchSize) {
    const size_t traceIdx = static_cast<size_t>(
        derive_seed(iterSeed, /*purpose=*/21, episodeTraces.size()) %
        pool.size());
    episodeTraces.push_back(traceIdx);
    plannedTransitions +=
        static_cast<size_t>(pool.traces[traceIdx].horizon);
  }

  std::vector<EpisodeRecord> records(episodeTraces.size());
  std::atomic<size_t> nextEpisode{0};
  auto workerLoop = [&] {
    for (;;) {
      const size_t e = nextEpisode.fetch_add(1);
      if (e >= episodeTraces.size()) break;
      const size_t traceIdx = episodeTraces[e];
      records[e] = run_policy_episode(
          model, pool.traces[traceIdx], pool.capacities[traceIdx], weights,
          derive_seed(iterSeed, /*purpose=*/22, e), /*deterministic=*/false,
          config.rewardScale);
    }
  };
  if (config.workers == 1) {
    workerLoop();
  } else {
    std::vector<std::thread> threads;
    const size_t nThreads = std::min(config.workers, episodeTraces.size());
    threads.reserve(nThreads);
    for (size_t w = 0; w < nThreads; ++w) threads.emplace_back(workerLoop);
    for (auto& th : threads) th.join();
  }

  TrajectoryBatch batch;
  for (size_t e = 0; e < records.size(); ++e) {
    for (auto& tr : records[e].transitions) {
      tr.episode = e;
      batch.transitions.push_back(std::move(tr));
    }
    for (auto& s : records[e].auxSamples)
      batch.auxSamples.push_back(std::move(s));
    batch.episodeMetrics.push_back(records[e].metrics);
  }
  return batch;
}

void compute_gae(TrajectoryBatch& batch, double gamma, double lambda,
                 bool normalize) {
  auto& ts = batch.transitions;
  size_t i = 0;
  while (i < ts.size()) {
    size_t end = i;
    while (end < ts.size() && ts[end].episode == ts[i].episode) {
      if (end > i && ts[end - 1].done)
        throw ContractError("transitions not time-ordered within episode");
      ++end;
    }
    if (!ts[end - 1].done)
      throw ContractError("episode does not end with a terminal transition");
    double nextAdvantage = 0.0;
    double nextValue = 0.0;  // V(s_T) = 0 at episode end
    for (size_t j = end; j-- > i;) {
      const double delta =
          ts[j].reward + gamma * nextValue - ts[j].value;
      ts[j].advantage = delta + gamma * lambda * nextAdvantage;
      nextAdvantage = ts[j].advantage;
      nextValue = ts[j].value;
    }
    i = end;
  }

  double mean = 0.0;
  for (const auto& t : ts) mean += t.advantage;
  mean /= ts.empty() ? 1.0 : static_cast<double>(ts.size());
  double var = 0.0;
  for (const auto& t : ts) var += (t.advantage - mean) * (t.advantage - mean);
  var /= ts.empty() ? 1.0 : static_cast<double>(ts.size());
  const double stddev = std::sqrt(var);
  for (auto& t : ts)
    t.advantageNormalized = normalize && stddev > 1e-12
                                ? (t.advantage - mean) / stddev
                                : t.advantage;
}

LossReport ppo_update(const TrajectoryBatch& batch, Model& model,
                      const PpoConfig& config, double policyLr, double valueLr,
                      size_t iteration) {
  const auto& ts = batch.transitions;
  if (ts.empty()) return {};

  LossReport report;
  size_t reportCount = 0;
  Rng shuffleRng(derive_seed(config.seed, /*purpose=*/30, iteration));
  std::vector<size_t> order(ts.size());
  std::iota(order.begin(), order.end(), 0);

  for (size_t epoch = 0; epoch < config.epochsPerUpdate; ++epoch) {
    // Fisher-Yates with our deterministic rng
    for (size_t i = order.size(); i > 1; --i) {
      const size_t j =
          static_cast<size_t>(shuffleRng.uniform_int(0, static_cast<int64_t>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }
    for (size_t start = 0; start < order.size();
         start += config.minibatchSize) {
      const size_t stop = std::min(order.size(), start + config.minibatchSize);
      Tape tape;
      std::map<std::string, Tape::Ref> paramRefs;
      Tape::Ref surrogateSum = -1;
      Tape::Ref valueLossSum = -1;
      for (size_t k = start; k < stop; ++k) {
        const Transition& tr = ts[order[k]];
        const auto refs = model.build_forward(tape, tr.features, paramRefs);
        const Tape::Ref logProbNew = model.build_log_prob(
            tape, refs, tr.cs, tr.features.currentMask);
        const double adv = config.normalizeAdvantages
                               ? tr.advantageNormalized
                               : tr.advantage;
        const Tape::Ref surrogate = tape.ppo_surrogate(
            logProbNew, tr.logProbOld, adv, config.epsilon);
        const Tape::Ref vLoss =
            tape.square(tape.add_const(refs.value, -value_target(tr)));
        surrogateSum =
            surrogateSum < 0 ? surrogate : tape.add(surrogateSum, surrogate);
        valueLossSum =
            valueLossSum < 0 ? vLoss : tape.add(valueLossSum, vLoss);

        const double ratio =
            std::exp(tape.scalar(logProbNew) - tr.logProbOld);
        report.meanRatio += ratio;
        report.clipFraction += std::abs(ratio - 1.0) > config.epsilon;
        ++reportCount;
      }
      const double invCount = 1.0 / static_cast<double>(stop - start);
      // maximize the surrogate = minimize its negation
      Tape::Ref policyLoss = tape.scale(surrogateSum, -invCount);
      Tape::Ref valueLoss = tape.scale(valueLossSum, invCount);
      if (!std::isfinite(tape.scalar(policyLoss)) ||
          !std::isfinite(tape.scalar(valueLoss)))
        throw NumericError("non-finite PPO loss");
      report.policyLoss += tape.scalar(policyLoss);
      report.valueLoss += tape.scalar(valueLoss);

      tape.backward(policyLoss);
      std::map<std::string, Tensor> grads;
      for (const auto& [name, ref] : paramRefs) grads[name] = tape.grad(ref);
      model.net().adam_step(grads, policyLr);

      tape.backward(valueLoss);
      grads.clear();
      for (const auto& [name, ref] : paramRefs) grads[name] = tape.grad(ref);
      model.net().adam_step(grads, valueLr);
    }
  }
  const double nMinibatches = std::ceil(
      static_cast<double>(ts.size()) / static_cast<double>(config.minibatchSize));
  report.policyLoss /= config.epochsPerUpdate * nMinibatches;
  report.valueLoss /= config.epochsPerUpdate * nMinibatches;
  report.meanRatio /= static_cast<double>(reportCount);
  report.clipFraction /= static_cast<double>(reportCount);
  return report;
}

EvalResult evaluate(const Model& model, const TracePool& pool,
                    const RewardWeights& weights, size_t n) {
  EvalResult result;
  if (n == 0 || pool.size() == 0) return result;
  std::vector<double> totals(n, 0.0);
  std::vector<Metrics> metrics(n);
  for (size_t i = 0; i < n; ++i) {
    const size_t traceIdx = i % pool.size();
    const EpisodeRecord rec = run_policy_episode(
        model, pool.traces[traceIdx], pool.capacities[traceIdx], weights,
        /*seed=*/0, /*deterministic=*/true, 1.0, /*keepTransitions=*/false);
    totals[i] = rec.metrics.totalReward;
    metrics[i] = rec.metrics;
  }
  for (size_t i = 0; i < n; ++i) {
    result.mean += totals[i];
    result.averaged.utilization += metrics[i].utilization;
    result.averaged.timeDelay += metrics[i].timeDelay;
    result.averaged.violationPenalty += metrics[i].violationPenalty;
    result.averaged.totalReward += metrics[i].totalReward;
  }
  const double dn = static_cast<double>(n);
  result.mean /= dn;
  result.averaged.utilization /= dn;
  result.averaged.timeDelay /= dn;
  result.averaged.violationPenalty /= dn;
  result.averaged.totalReward /= dn;
  double var = 0.0;
  for (double t : totals) var += (t - result.mean) * (t - result.mean);
  result.stddev = n > 1 ? std::sqrt(var / dn) : 0.0;
  return result;
}

std::string iteration_log_csv(const std::vector<IterationRow>& log) {
  std::ostringstream out;
  out.precision(17);
  out << "iter,policy_loss,value_loss,aux_loss,eval_mean,eval_std,"
         "utilization,time_delay,violation,lr_policy,lr_value\n";
  for (const auto& row : log)
    out << row.iter << ',' << row.policyLoss << ',' << row.valueLoss << ','
        << row.auxLoss << ',' << row.evalMean << ',' << row.evalStd << ','
        << row.utilization << ',' << row.timeDelay << ',' << row.violation
        << ',' << row.lrPolicy << ',' << row.lrValue << '\n';
  return out.str();
}

TrainResult train(Model& model, const TracePool& pool, const PpoConfig& config,
                  const RewardWeights& weights,
                  const CheckpointHook& checkpointHook) {
  config.validate();
  TrainResult result;
  if (config.iterations == 0) return result;

  result.initialEval = evaluate(model, pool, weights, config.evalTrajectories);
  EvalResult lastEval = result.initialEval;

  Rng auxShuffleRng(derive_seed(config.seed, /*purpose=*/40, 0));
  for (size_t iter = 0; iter < config.iterations; ++iter) {
    TrajectoryBatch batch = collect_rollouts(model, pool, config, weights, iter);
    compute_gae(batch, config.gamma, config.lambda, config.normalizeAdvantages);

    // one aux epoch per iteration, minibatched
    const double auxLr = config.aux_lr(iter);
    std::vector<size_t> auxOrder(batch.auxSamples.size());
    std::iota(auxOrder.begin(), auxOrder.end(), 0);
    for (size_t i = auxOrder.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(
          auxShuffleRng.uniform_int(0, static_cast<int64_t>(i) - 1));
      std::swap(auxOrder[i - 1], auxOrder[j]);
    }
    std::array<double, 4> auxMse{};
    size_t auxBatches = 0;
    for (size_t start = 0; start < auxOrder.size();
         start += config.minibatchSize) {
      const size_t stop =
          std::min(auxOrder.size(), start + config.minibatchSize);
      std::vector<AuxSample> minibatch;
      minibatch.reserve(stop - start);
      for (size_t k = start; k < stop; ++k)
        minibatch.push_back(batch.auxSamples[auxOrder[k]]);
      const auto mse = model.aux_train_step(minibatch, auxLr);
      for (size_t k = 0; k < 4; ++k) auxMse[k] += mse[k];
      ++auxBatches;
    }
    if (auxBatches > 0)
      for (size_t k = 0; k < 4; ++k) auxMse[k] /= static_cast<double>(auxBatches);

    const double policyLr = config.policy_lr(iter);
    const double valueLr = config.value_lr(iter);
    const LossReport losses =
        ppo_update(batch, model, config, policyLr, valueLr, iter);

    const bool evalNow = config.evalEvery > 0 &&
                         ((iter + 1) % config.evalEvery == 0 ||
                          iter + 1 == config.iterations);
    if (evalNow)
      lastEval = evaluate(model, pool, weights, config.evalTrajectories);

    IterationRow row;
    row.iter = iter;
    row.policyLoss = losses.policyLoss;
    row.valueLoss = losses.valueLoss;
    row.auxTaskMse = auxMse;
    row.auxLoss = auxMse[0] + auxMse[1] + auxMse[2] + auxMse[3];
    row.evalMean = lastEval.mean;
    row.evalStd = lastEval.stddev;
    row.utilization = lastEval.averaged.utilization;
    row.timeDelay = lastEval.averaged.timeDelay;
    row.violation = lastEval.averaged.violationPenalty;
    row.lrPolicy = policyLr;
    row.lrValue = valueLr;
    result.log.push_back(row);

    if (checkpointHook && config.checkpointEvery > 0 &&
        (iter + 1) % config.checkpointEvery == 0)
      checkpointHook(iter, model);
  }
  result.finalEval = lastEval;
  return result;
}

}  // namespace osdec
