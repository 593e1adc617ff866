#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "osdec/config.hpp"
#include "osdec/errors.hpp"
#include "osdec/model.hpp"
#include "osdec/neuro/checkpoint.hpp"
#include "osdec/oracle.hpp"
#include "osdec/schedulers.hpp"
#include "osdec/trainer.hpp"
#include "osdec/workload.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw osdec::ValidationError("cannot read file " + path);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw osdec::ValidationError("cannot write file " + path.string());
  out << content;
}

json metrics_json(const osdec::Metrics& m,
                  const std::map<int64_t, int>& schedule) {
  json perJob = json::array();
  for (const auto& [id, start] : schedule)
    perJob.push_back({{"id", id}, {"start_t", start}});
  return {{"utilization", m.utilization},
          {"time_delay", m.timeDelay},
          {"violation_penalty", m.violationPenalty},
          {"total_reward", m.totalReward},
          {"per_job", perJob}};
}

std::string schedule_csv(const std::map<int64_t, int>& schedule) {
  std::string out = "job_id,start_t\n";
  for (const auto& [id, start] : schedule)
    out += std::to_string(id) + "," + std::to_string(start) + "\n";
  return out;
}

osdec::Model load_model(const std::string& checkpointPath) {
  const fs::path ckpt(checkpointPath);
  const fs::path sidecar = ckpt.parent_path() / "model_config.json";
  osdec::ModelConfig config =
      osdec::model_config_from_json(read_file(sidecar.string()));
  osdec::Model model(config, /*seed=*/0);
  osdec::neuro::load_checkpoint(
      checkpointPath, {{"net", &model.net()}, {"aux", &model.auxParams()}});
  return model;
}

osdec::EpisodeRecord run_policy(const osdec::Model& model,
                                const osdec::WorkloadTrace& trace,
                                const osdec::CapacitySeries& capacity,
                                const osdec::RewardWeights& weights) {
  return osdec::run_policy_episode(model, trace, capacity, weights, /*seed=*/0,
                                   /*deterministic=*/true, 1.0,
                                   /*keepTransitions=*/false);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deferrable-job scheduling workbench"};
  app.require_subcommand(1);

  // ---- generate ----
  auto* generate = app.add_subcommand(
      "generate", "Generate a synthetic workload and capacity series");
  std::string genConfigPath, genOutDir;
  int64_t genSeed = -1;
  generate->add_option("--config", genConfigPath,
                       "Experiment config JSON (defaults used when omitted)");
  generate->add_option("--seed", genSeed, "Override the config seed");
  generate->add_option("--out", genOutDir, "Output directory")->required();

  // ---- run-heuristic ----
  auto* runHeuristic =
      app.add_subcommand("run-heuristic", "Run a heuristic scheduler");
  std::string rhKind, rhJobs, rhCapacity, rhOutDir;
  bool rhRealtime = false, rhGreedy = false;
  double rhOmega1 = 2.0, rhOmega2 = 10.0;
  uint64_t rhSeed = 0;
  runHeuristic
      ->add_option("--kind", rhKind, "fifo|sjf|hrrn|tetris|random")
      ->required();
  runHeuristic->add_option("--jobs", rhJobs, "Job CSV")->required();
  runHeuristic->add_option("--capacity", rhCapacity, "Capacity CSV")
      ->required();
  runHeuristic->add_flag("--realtime", rhRealtime,
                         "Collapse windows to the submission instant");
  runHeuristic->add_flag("--greedy-prefix", rhGreedy,
                         "Skip past overflowing jobs instead of stopping");
  runHeuristic->add_option("--omega1", rhOmega1, "Delay penalty coefficient");
  runHeuristic->add_option("--omega2", rhOmega2,
                           "Violation penalty coefficient");
  runHeuristic->add_option("--seed", rhSeed, "Seed for the random scheduler");
  runHeuristic->add_option("--out", rhOutDir,
                           "Directory for metrics.json and schedule.csv");

  // ---- solve-oracle ----
  auto* solveOracle = app.add_subcommand(
      "solve-oracle", "Exact offline optimum on a small instance");
  std::string soJobs, soCapacity, soOutDir;
  double soOmega1 = 2.0, soOmega2 = 10.0, soBudget = 2e6;
  solveOracle->add_option("--jobs", soJobs, "Job CSV")->required();
  solveOracle->add_option("--capacity", soCapacity, "Capacity CSV")->required();
  solveOracle->add_option("--omega1", soOmega1, "Delay penalty coefficient");
  solveOracle->add_option("--omega2", soOmega2, "Violation penalty coefficient");
  solveOracle->add_option("--budget", soBudget,
                          "Candidate-assignment budget before refusing");
  solveOracle->add_option("--out", soOutDir,
                          "Directory for plan.csv and objective.json");

  // ---- train ----
  auto* trainCmd = app.add_subcommand("train", "Train the RL scheduler");
  std::string trConfigPath, trOutDir;
  trainCmd->add_option("--config", trConfigPath, "Experiment config JSON")
      ->required();
  trainCmd->add_option("--out", trOutDir, "Output directory")->required();

  // ---- evaluate ----
  auto* evalCmd = app.add_subcommand(
      "evaluate", "Deterministic evaluation of a trained checkpoint");
  std::string evCheckpoint, evJobs, evCapacity;
  double evOmega1 = 2.0, evOmega2 = 10.0;
  evalCmd->add_option("--checkpoint", evCheckpoint, "Checkpoint JSON")
      ->required();
  evalCmd->add_option("--jobs", evJobs, "Job CSV")->required();
  evalCmd->add_option("--capacity", evCapacity, "Capacity CSV")->required();
  evalCmd->add_option("--omega1", evOmega1, "Delay penalty coefficient");
  evalCmd->add_option("--omega2", evOmega2, "Violation penalty coefficient");

  // ---- compare ----
  auto* compareCmd = app.add_subcommand(
      "compare", "Metrics table for every method on one trace");
  std::string cmpJobs, cmpCapacity, cmpCheckpoint;
  double cmpOmega1 = 2.0, cmpOmega2 = 10.0;
  bool cmpRealtime = false;
  compareCmd->add_option("--jobs", cmpJobs, "Job CSV")->required();
  compareCmd->add_option("--capacity", cmpCapacity, "Capacity CSV")->required();
  compareCmd->add_option("--checkpoint", cmpCheckpoint,
                         "Optional checkpoint to include the learned policy");
  compareCmd->add_option("--omega1", cmpOmega1, "Delay penalty coefficient");
  compareCmd->add_option("--omega2", cmpOmega2, "Violation penalty coefficient");
  compareCmd->add_flag("--realtime", cmpRealtime,
                       "Collapse windows to the submission instant");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*generate) {
      osdec::ExperimentConfig config;
      if (!genConfigPath.empty())
        config = osdec::load_experiment_config(genConfigPath);
      if (genSeed >= 0) config.seed = static_cast<uint64_t>(genSeed);
      osdec::SyntheticSpec spec = config.synthetic;
      spec.seed = config.trace_seed(0);
      const auto [trace, capacity] = osdec::generate_workload(spec);
      fs::create_directories(genOutDir);
      write_file(fs::path(genOutDir) / "jobs.csv", osdec::serialize_jobs(trace));
      write_file(fs::path(genOutDir) / "capacity.csv",
                 osdec::serialize_capacity(capacity));
      std::cout << "wrote " << trace.jobs.size() << " jobs over horizon "
                << trace.horizon << " to " << genOutDir << "\n";
    } else if (*runHeuristic) {
      const auto kind = osdec::scheduler_kind_from_string(rhKind);
      const auto capacity = osdec::parse_capacity(read_file(rhCapacity));
      osdec::WorkloadTrace trace = osdec::parse_jobs(
          read_file(rhJobs), static_cast<int>(capacity.values.size()));
      if (rhRealtime) trace = osdec::to_realtime(trace);
      const osdec::RewardWeights weights{rhOmega1, rhOmega2};
      const auto result = osdec::run_heuristic(kind, trace, capacity, weights,
                                               rhSeed, rhGreedy);
      const json out = metrics_json(result.metrics, result.schedule);
      std::cout << out.dump(2) << "\n";
      if (!rhOutDir.empty()) {
        fs::create_directories(rhOutDir);
        write_file(fs::path(rhOutDir) / "metrics.json", out.dump(2) + "\n");
        write_file(fs::path(rhOutDir) / "schedule.csv",
                   schedule_csv(result.schedule));
      }
    } else if (*solveOracle) {
      const auto capacity = osdec::parse_capacity(read_file(soCapacity));
      const auto trace = osdec::parse_jobs(
          read_file(soJobs), static_cast<int>(capacity.values.size()));
      const osdec::RewardWeights weights{soOmega1, soOmega2};
      const auto instance =
          osdec::OfflineInstance::from(trace, capacity, weights);
      const auto plan = osdec::solve_exact(instance, soBudget);
      const json out = {{"objective", plan.objective},
                        {"scheduled_jobs", plan.startTimes.size()}};
      std::cout << out.dump(2) << "\n";
      if (!soOutDir.empty()) {
        fs::create_directories(soOutDir);
        write_file(fs::path(soOutDir) / "objective.json", out.dump(2) + "\n");
        write_file(fs::path(soOutDir) / "plan.csv",
                   schedule_csv(plan.startTimes));
      }
    } else if (*trainCmd) {
      const auto config = osdec::load_experiment_config(trConfigPath);
      fs::create_directories(trOutDir);
      const auto pool = config.build_trace_pool();
      osdec::Model model(config.model, config.model_seed());
      const fs::path outDir(trOutDir);
      auto checkpointHook = [&](size_t iter, const osdec::Model& m) {
        osdec::neuro::save_checkpoint(
            (outDir / ("checkpoint_" + std::to_string(iter + 1) + ".json"))
                .string(),
            {{"net", &m.net()}, {"aux", &m.auxParams()}});
      };
      const auto result = osdec::train(model, pool, config.ppo,
                                       config.weights, checkpointHook);
      write_file(outDir / "log.csv", osdec::iteration_log_csv(result.log));
      std::string auxCsv =
          "iter,mse_capacity,mse_avg_cores,mse_avg_duration,mse_violation\n";
      for (const auto& row : result.log) {
        auxCsv += std::to_string(row.iter);
        for (double v : row.auxTaskMse) auxCsv += "," + std::to_string(v);
        auxCsv += "\n";
      }
      write_file(outDir / "aux_mse.csv", auxCsv);
      osdec::neuro::save_checkpoint(
          (outDir / "checkpoint.json").string(),
          {{"net", &model.net()}, {"aux", &model.auxParams()}});
      write_file(outDir / "model_config.json",
                 osdec::model_config_to_json(config.model) + "\n");
      write_file(outDir / "resolved_config.json",
                 osdec::experiment_config_to_json(config) + "\n");
      std::cout << "initial eval mean " << result.initialEval.mean
                << ", final eval mean " << result.finalEval.mean << "\n";
    } else if (*evalCmd) {
      const auto model = load_model(evCheckpoint);
      const auto capacity = osdec::parse_capacity(read_file(evCapacity));
      const auto trace = osdec::parse_jobs(
          read_file(evJobs), static_cast<int>(capacity.values.size()));
      const osdec::RewardWeights weights{evOmega1, evOmega2};
      const auto rec = run_policy(model, trace, capacity, weights);
      std::cout << metrics_json(rec.metrics, rec.schedule).dump(2) << "\n";
    } else if (*compareCmd) {
      const auto capacity = osdec::parse_capacity(read_file(cmpCapacity));
      osdec::WorkloadTrace trace = osdec::parse_jobs(
          read_file(cmpJobs), static_cast<int>(capacity.values.size()));
      if (cmpRealtime) trace = osdec::to_realtime(trace);
      const osdec::RewardWeights weights{cmpOmega1, cmpOmega2};
      std::cout << "algorithm,utilization,time_delay,total_reward\n";
      for (const auto kind :
           {osdec::SchedulerKind::FIFO, osdec::SchedulerKind::SJF,
            osdec::SchedulerKind::HRRN, osdec::SchedulerKind::TETRIS}) {
        const auto result =
            osdec::run_heuristic(kind, trace, capacity, weights);
        std::cout << osdec::to_string(kind) << ','
                  << result.metrics.utilization << ','
                  << result.metrics.timeDelay << ','
                  << result.metrics.totalReward << "\n";
      }
      if (!cmpCheckpoint.empty()) {
        const auto model = load_model(cmpCheckpoint);
        const auto rec = run_policy(model, trace, capacity, weights);
        std::cout << "osdec," << rec.metrics.utilization << ','
                  << rec.metrics.timeDelay << ',' << rec.metrics.totalReward
                  << "\n";
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
