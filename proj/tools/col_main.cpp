// col: command-line entry point for experiments, evaluation, live sessions
// and dataset inspection.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>

#include <fmt/core.h>

#include "CLI11.hpp"
#include "col/bridge.hpp"
#include "col/checkpoint.hpp"
#include "col/config.hpp"
#include "col/dataset.hpp"
#include "col/experiments.hpp"
#include "col/trainer.hpp"

namespace fs = std::filesystem;

namespace {

constexpr const char* kOutputRootEnv = "COL_OUTPUT_ROOT";

fs::path output_root() {
  if (const char* env = std::getenv(kOutputRootEnv); env && *env) return env;
  return "runs";
}

std::string timestamp_dir(const std::string& prefix) {
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  return fmt::format("{}-{}", prefix, std::chrono::duration_cast<std::chrono::seconds>(now).count());
}

col::ExperimentGrid grid_or_default(const std::string& path) {
  if (path.empty()) return {};
  return col::ExperimentGrid::from_tree(col::load_config(path));
}

int cmd_run_experiment(const std::string& grid_file, std::string out, int workers) {
  auto grid = col::ExperimentGrid::from_tree(col::load_config(grid_file));
  if (workers > 0) grid.workers = static_cast<unsigned>(workers);
  grid.validate();
  const fs::path out_dir = out.empty() ? output_root() / fs::path(grid_file).stem() : fs::path(out);
  fs::create_directories(out_dir);
  fmt::print("grid {} -> {}\n", grid_file, out_dir.string());
  const auto results = col::run_grid(grid, out_dir, [](const col::CellResult& r) {
    fmt::print("  {:<12} b={:<3} s={} completion={} samples={}{}\n", col::to_string(r.condition),
               r.budget ? std::to_string(*r.budget) : "-", r.seed,
               r.completion ? fmt::format("{:.3f}", *r.completion) : "-",
               r.human_samples ? std::to_string(*r.human_samples) : "-",
               r.error ? "  error: " + *r.error : "");
    std::fflush(stdout);
  });
  col::emit_report(results, out_dir);
  std::cout << col::summary_csv(col::summarize(results));
  for (const auto& r : results)
    if (r.error) return 2;
  return 0;
}

int cmd_evaluate(const std::string& checkpoint, int runs, std::uint64_t seed,
                 const std::string& grid_file) {
  const auto grid = grid_or_default(grid_file);
  const double success =
      col::evaluate_checkpoint_file(checkpoint, grid.task, grid.camera, runs, seed);
  fmt::print("{}: success {:.4f} over {} runs (seed {})\n", checkpoint, success, runs, seed);
  return 0;
}

int cmd_serve(unsigned short port, const std::string& mode, int episodes, const std::string& config,
              std::string out, const std::string& static_root, std::uint64_t seed) {
  const auto grid = grid_or_default(config);
  col::SessionConfig scfg = grid.session;
  scfg.mode = col::parse_session_mode(mode);
  scfg.n_episodes = episodes;
  scfg.seed = seed;
  scfg.validate();

  const fs::path out_dir = out.empty() ? output_root() / timestamp_dir("live") : fs::path(out);
  fs::create_directories(out_dir);

  col::BridgeConfig bcfg;
  bcfg.port = port;
  bcfg.session_id = out_dir.filename().string();
  if (!static_root.empty()) bcfg.static_root = static_root;
  col::BridgeServer server(bcfg, scfg);
  server.start();
  fmt::print("serving ws://127.0.0.1:{}/session  mode={} episodes={} out={}\n", server.port(),
             mode, episodes, out_dir.string());
  std::fflush(stdout);

  col::Mlp policy = col::Mlp::policy_network();
  col::Rng init_rng = col::make_rng(seed, 0x696e6974);
  policy.init_he_normal(init_rng);
  col::HumanDataset dataset(out_dir / "dataset.csv", col::HumanDataset::OpenMode::Truncate);
  col::SessionOutputs outputs;
  outputs.directory = out_dir;
  outputs.checkpoint_prefix = "live";
  outputs.config_hash = col::study_hash(grid);
  outputs.on_step = [](const col::StepEvent& e) {
    if (e.outcome->status.done())
      fmt::print("episode {} {} ({} steps)\n", e.episode, col::to_string(e.outcome->status.tag),
                 e.state->time_step);
  };
  const auto result = col::serve_session(scfg, grid.task, grid.camera, grid.trainer, dataset,
                                         std::move(policy), server, outputs);
  server.stop();
  fmt::print("session done: {} episodes, {} human samples, task performance {:.3f}\n",
             result.episodes.size(), result.human_samples, result.task_performance);
  if (result.error) {
    fmt::print(stderr, "error: {}\n", *result.error);
    return 2;
  }
  return 0;
}

int cmd_replay(const std::string& dataset_file, const std::string& train_out, int eval_runs,
               const std::string& grid_file) {
  const auto samples = col::load_samples(dataset_file);
  std::map<int, std::pair<std::size_t, std::size_t>> per_episode;
  for (const auto& s : samples) {
    auto& [demo, inter] = per_episode[s.episode_id];
    (s.source == col::SampleSource::Demonstration ? demo : inter)++;
  }
  fmt::print("{}: {} samples, {} episodes\n", dataset_file, samples.size(), per_episode.size());
  fmt::print("episode,demonstration,intervention\n");
  for (const auto& [ep, counts] : per_episode)
    fmt::print("{},{},{}\n", ep, counts.first, counts.second);
  if (train_out.empty()) return 0;

  const auto grid = grid_or_default(grid_file);
  col::HumanDataset dataset;
  for (const auto& s : samples) dataset.append(s);
  col::Mlp policy = col::Mlp::policy_network();
  col::Rng init_rng = col::make_rng(grid.trainer.seed, 0x696e6974);
  policy.init_he_normal(init_rng);
  col::PolicyTrainer trainer(dataset, std::move(policy), grid.trainer);
  const auto epochs = trainer.drain();
  const auto snap = trainer.latest();
  col::Checkpoint ckpt{snap->policy, trainer.optimizer(), col::study_hash(grid),
                       "replay"};
  col::save_checkpoint(train_out, ckpt);
  fmt::print("trained {} epochs, loss {:.6g} -> {}\n", epochs, snap->loss, train_out);
  if (eval_runs > 0) {
    const double success = col::evaluate_checkpoint(snap->policy, grid.task, grid.camera,
                                                    eval_runs, grid.eval_seed);
    fmt::print("success {:.4f} over {} runs\n", success, eval_runs);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learning from demonstrations and interventions for quadrotor landing"};
  app.footer(fmt::format("Default output root: ${} or ./runs", kOutputRootEnv));
  app.require_subcommand(1);

  std::string grid_file, out, checkpoint, mode = "col", dataset_file, config, static_root,
                                       train_out;
  int workers = 0, runs = 100, episodes = 4, eval_runs = 0;
  std::uint64_t eval_seed = 2019, seed = 0;
  unsigned short port = 8765;

  auto* run = app.add_subcommand("run-experiment", "Run an experiment grid and write reports");
  run->add_option("--grid", grid_file, "Grid INI file")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "Output directory (default: <output root>/<grid name>)");
  run->add_option("--workers", workers, "Parallel cells (default: value in grid file)");

  auto* eval = app.add_subcommand("evaluate", "Evaluate a checkpoint with agent-only episodes");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--runs", runs, "Evaluation episodes")->capture_default_str();
  eval->add_option("--seed", eval_seed, "Start-position seed")->capture_default_str();
  eval->add_option("--config", config, "INI with [task]/[camera] overrides");

  auto* serve = app.add_subcommand("serve", "Host a live session for the teleoperation console");
  serve->add_option("--port", port, "Listen port (0 picks a free port)")->capture_default_str();
  serve->add_option("--mode", mode, "Session mode")
      ->check(CLI::IsMember({"demo", "intervene", "col"}))
      ->capture_default_str();
  serve->add_option("--episodes", episodes, "Episodes in the session")->capture_default_str();
  serve->add_option("--seed", seed, "Session seed")->capture_default_str();
  serve->add_option("--config", config, "INI with [task]/[camera]/[trainer]/[session] blocks");
  serve->add_option("--out", out, "Session directory (default: <output root>/live-<time>)");
  serve->add_option("--static", static_root, "Directory of console assets to serve over HTTP");

  auto* replay = app.add_subcommand("replay", "Summarize a recorded dataset, optionally retrain");
  replay->add_option("--dataset", dataset_file, "Dataset CSV")
      ->required()
      ->check(CLI::ExistingFile);
  replay->add_option("--train-out", train_out, "Train offline on the dataset and save here");
  replay->add_option("--eval-runs", eval_runs, "Evaluate the retrained policy (0 = skip)")
      ->capture_default_str();
  replay->add_option("--config", config, "INI with [task]/[camera]/[trainer] blocks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run_experiment(grid_file, out, workers);
    if (*eval) return cmd_evaluate(checkpoint, runs, eval_seed, config);
    if (*serve) return cmd_serve(port, mode, episodes, config, out, static_root, seed);
    if (*replay) return cmd_replay(dataset_file, train_out, eval_runs, config);
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
