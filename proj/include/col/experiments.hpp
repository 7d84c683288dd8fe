#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "col/config.hpp"
#include "col/mlp.hpp"
#include "col/oracle.hpp"
#include "col/perception.hpp"
#include "col/ppo.hpp"
#include "col/session.hpp"
#include "col/sim.hpp"
#include "col/trainer.hpp"

namespace col {

enum class Condition {
  Demonstration,
  Intervention,
  CycleOfLearning,
  Ppo2,
  Ppo3,
  Ppo4,
  Random,
};

std::string_view to_string(Condition c);
Condition parse_condition(std::string_view text);
bool is_imitation(Condition c);

// Study design plus every config block the cells need. File layout: a
// [grid] section and optional [task], [camera], [oracle], [trainer],
// [session] and [ppo] sections.
struct ExperimentGrid {
  std::vector<Condition> conditions = {Condition::Demonstration, Condition::Intervention,
                                       Condition::CycleOfLearning};
  std::vector<int> budgets = {4, 8, 12, 20};
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  int eval_runs = 100;
  std::uint64_t eval_seed = 2019;
  bool per_episode_curves = true;
  unsigned workers = 1;

  TaskConfig task;
  CameraConfig camera;
  OracleConfig oracle;
  TrainerConfig trainer;
  SessionConfig session;  // mode, n_episodes and seed are set per cell
  PPOConfig ppo;          // action_dims and seed are set per cell

  void validate() const;
  ConfigTree to_tree() const;
  static ExperimentGrid from_tree(const ConfigTree& tree);
};

// Config hash stored in checkpoints. Ignores the worker count, which never
// changes results.
std::uint64_t study_hash(const ExperimentGrid& grid);

using PolicyFn = std::function<ActionCommand(const Observation&)>;

// Success fraction over n_runs agent-only episodes. Run i starts from
// make_rng(seed, i), so every policy sees the same start positions.
double evaluate_policy(const PolicyFn& policy, const TaskConfig& task, const CameraConfig& cam,
                       int n_runs, std::uint64_t seed);

// Controller for a stored network: tanh-output networks are imitation
// policies; identity-output networks are PPO means (tanh + restriction).
PolicyFn policy_from_network(const Mlp& net);

double evaluate_checkpoint(const Mlp& params, const TaskConfig& task, const CameraConfig& cam,
                           int n_runs, std::uint64_t seed);

class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Loads and evaluates; load failures name the checkpoint.
double evaluate_checkpoint_file(const std::filesystem::path& path, const TaskConfig& task,
                                const CameraConfig& cam, int n_runs, std::uint64_t seed);

struct EpisodePoint {
  int episode = 0;
  double completion = 0.0;
  std::size_t human_samples = 0;
};

struct CellResult {
  Condition condition = Condition::Demonstration;
  std::optional<int> budget;  // human interactions; none for PPO / random
  std::uint64_t seed = 0;
  int episodes = 0;
  std::optional<double> completion;
  std::optional<std::size_t> human_samples;
  std::optional<double> final_rolling_success;
  std::string checkpoint;  // relative to the output directory
  std::optional<std::string> error;
  std::vector<EpisodePoint> episode_curve;
  std::vector<PpoCurvePoint> training_curve;
};

struct ConditionSummary {
  Condition condition = Condition::Demonstration;
  std::optional<int> budget;
  int n_seeds = 0;
  double completion_mean = 0.0;
  std::optional<double> completion_stderr;
  std::optional<double> samples_mean;
  std::optional<double> samples_stderr;
  // (completion/samples) relative to demonstrations at the same budget.
  std::optional<double> completion_per_sample_ratio;
  std::optional<double> sample_reduction_vs_demo;
};

// Sample standard deviation over sqrt(n); none when n < 2.
std::optional<double> standard_error(const std::vector<double>& values);

// Runs one cell, writing its files under out_dir.
CellResult run_cell(const ExperimentGrid& grid, Condition condition, std::optional<int> budget,
                    std::uint64_t seed, const std::filesystem::path& out_dir);

// Every (condition, budget, seed) cell; failures are recorded, not thrown.
std::vector<CellResult> run_grid(const ExperimentGrid& grid, const std::filesystem::path& out_dir,
                                 const std::function<void(const CellResult&)>& progress = {});

std::vector<ConditionSummary> summarize(const std::vector<CellResult>& results);

// Writes results.csv, summary.csv, episode_curves.csv and ppo_curves.csv.
void emit_report(const std::vector<CellResult>& results, const std::filesystem::path& out_dir);

std::string results_csv(const std::vector<CellResult>& results);
std::string summary_csv(const std::vector<ConditionSummary>& summary);

}  // namespace col
