#include "col/experiments.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "col/checkpoint.hpp"
#include "col/dataset.hpp"

namespace col {

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

template <typename T, typename F>
std::string join(const std::vector<T>& items, F&& fmt_item) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    out += fmt_item(items[i]);
  }
  return out;
}

template <typename T>
std::string opt_field(const std::optional<T>& v) {
  return v ? fmt::format("{}", *v) : std::string();
}

std::filesystem::path cell_dir(Condition c, std::optional<int> budget, std::uint64_t seed) {
  std::filesystem::path p = std::string(to_string(c));
  if (budget) p /= fmt::format("b{}", *budget);
  return p / fmt::format("s{}", seed);
}

SessionMode session_mode_for(Condition c) {
  switch (c) {
    case Condition::Demonstration: return SessionMode::DemonstrationOnly;
    case Condition::Intervention: return SessionMode::InterventionOnly;
    default: return SessionMode::CycleOfLearning;
  }
}

ActionDims dims_for(Condition c) {
  switch (c) {
    case Condition::Ppo2: return ActionDims::Two;
    case Condition::Ppo3: return ActionDims::Three;
    default: return ActionDims::Four;
  }
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

}  // namespace

std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::Demonstration: return "demo";
    case Condition::Intervention: return "intervention";
    case Condition::CycleOfLearning: return "col";
    case Condition::Ppo2: return "ppo2";
    case Condition::Ppo3: return "ppo3";
    case Condition::Ppo4: return "ppo4";
    case Condition::Random: return "random";
  }
  return "unknown";
}

Condition parse_condition(std::string_view t) {
  if (t == "demo" || t == "DemonstrationOnly") return Condition::Demonstration;
  if (t == "intervention" || t == "InterventionOnly") return Condition::Intervention;
  if (t == "col" || t == "CycleOfLearning") return Condition::CycleOfLearning;
  if (t == "ppo2" || t == "PPO-2") return Condition::Ppo2;
  if (t == "ppo3" || t == "PPO-3") return Condition::Ppo3;
  if (t == "ppo4" || t == "PPO-4") return Condition::Ppo4;
  if (t == "random" || t == "Random") return Condition::Random;
  throw ConfigError("unknown condition '" + std::string(t) + "'");
}

bool is_imitation(Condition c) {
  return c == Condition::Demonstration || c == Condition::Intervention ||
         c == Condition::CycleOfLearning;
}

void ExperimentGrid::validate() const {
  if (conditions.empty()) throw ConfigError("grid: conditions must not be empty");
  if (budgets.empty()) throw ConfigError("grid: budgets must not be empty");
  if (seeds.empty()) throw ConfigError("grid: seeds must not be empty");
  for (int b : budgets)
    if (b < 1) throw ConfigError("grid: budgets must be >= 1");
  if (eval_runs < 1) throw ConfigError("grid: eval_runs must be >= 1");
  validate_task_camera(task, camera);
  oracle.validate();
  ppo.validate();
}

ConfigTree ExperimentGrid::to_tree() const {
  ConfigTree g;
  g.put("conditions", join(conditions, [](Condition c) { return std::string(to_string(c)); }));
  g.put("budgets", join(budgets, [](int b) { return std::to_string(b); }));
  g.put("seeds", join(seeds, [](std::uint64_t s) { return std::to_string(s); }));
  g.put("eval_runs", eval_runs);
  g.put("eval_seed", eval_seed);
  g.put("per_episode_curves", per_episode_curves ? 1 : 0);
  g.put("workers", workers);
  ConfigTree t;
  t.add_child("grid", g);
  t.add_child("task", task.to_tree());
  t.add_child("camera", camera.to_tree());
  t.add_child("oracle", oracle.to_tree());
  t.add_child("trainer", trainer.to_tree());
  t.add_child("session", session.to_tree());
  t.add_child("ppo", ppo.to_tree());
  return t;
}

ExperimentGrid ExperimentGrid::from_tree(const ConfigTree& t) {
  ExperimentGrid g;
  const ConfigTree grid = section(t, "grid");
  if (auto v = grid.get_optional<std::string>("conditions")) {
    g.conditions.clear();
    for (const auto& s : split_list(*v)) g.conditions.push_back(parse_condition(s));
  }
  if (auto v = grid.get_optional<std::string>("budgets")) {
    g.budgets.clear();
    for (const auto& s : split_list(*v)) {
      ConfigTree tmp;
      tmp.put("b", s);
      g.budgets.push_back(static_cast<int>(read_int(tmp, "b", 0)));
    }
  }
  if (auto v = grid.get_optional<std::string>("seeds")) {
    g.seeds.clear();
    for (const auto& s : split_list(*v)) {
      ConfigTree tmp;
      tmp.put("s", s);
      g.seeds.push_back(read_uint(tmp, "s", 0));
    }
  }
  g.eval_runs = static_cast<int>(read_int(grid, "eval_runs", g.eval_runs));
  g.eval_seed = read_uint(grid, "eval_seed", g.eval_seed);
  g.per_episode_curves = read_int(grid, "per_episode_curves", g.per_episode_curves) != 0;
  g.workers = static_cast<unsigned>(read_uint(grid, "workers", g.workers));
  g.task = TaskConfig::from_tree(section(t, "task"));
  g.camera = CameraConfig::from_tree(section(t, "camera"));
  g.oracle = OracleConfig::from_tree(section(t, "oracle"));
  g.trainer = TrainerConfig::from_tree(section(t, "trainer"));
  g.session = SessionConfig::from_tree(section(t, "session"));
  g.ppo = PPOConfig::from_tree(section(t, "ppo"));
  g.validate();
  return g;
}

double evaluate_policy(const PolicyFn& policy, const TaskConfig& task, const CameraConfig& cam,
                       int n_runs, std::uint64_t seed) {
  if (n_runs < 1) throw std::invalid_argument("evaluate_policy: n_runs must be >= 1");
  const ObservationScales scales = ObservationScales::from_config(task, cam);
  Simulator sim(task);
  PadTracker tracker(cam, task.pad_radius);
  int successes = 0;
  for (int run = 0; run < n_runs; ++run) {
    Rng start = make_rng(seed, static_cast<std::uint64_t>(run));
    sim.reset(start);
    tracker.reset();
    while (!sim.status().done()) {
      const Observation obs =
          assemble_observation(sim.state(), tracker.update(sim.state()), scales);
      sim.step(policy(obs));
    }
    successes += sim.status().success();
  }
  return static_cast<double>(successes) / n_runs;
}

PolicyFn policy_from_network(const Mlp& net) {
  if (net.input_dim() != static_cast<int>(kObservationDim))
    throw EvaluationError("network input size " + std::to_string(net.input_dim()) +
                          " does not match the observation size");
  if (net.output_activation() == Activation::Tanh && net.output_dim() == 4) {
    return [&net](const Observation& obs) {
      const Eigen::VectorXd a =
          net.forward_one(Eigen::Map<const Eigen::VectorXd>(obs.data(), obs.size()));
      return ActionCommand{a[0], a[1], a[2], a[3]};
    };
  }
  if (net.output_activation() == Activation::Identity && net.output_dim() >= 2 &&
      net.output_dim() <= 4) {
    const auto dims = static_cast<ActionDims>(net.output_dim());
    return [&net, dims](const Observation& obs) {
      const Eigen::VectorXd a =
          net.forward_one(Eigen::Map<const Eigen::VectorXd>(obs.data(), obs.size()))
              .array()
              .tanh();
      return restrict_action(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())),
                             dims);
    };
  }
  throw EvaluationError("network output layout is neither an imitation policy nor a PPO mean");
}

double evaluate_checkpoint(const Mlp& params, const TaskConfig& task, const CameraConfig& cam,
                           int n_runs, std::uint64_t seed) {
  return evaluate_policy(policy_from_network(params), task, cam, n_runs, seed);
}

double evaluate_checkpoint_file(const std::filesystem::path& path, const TaskConfig& task,
                                const CameraConfig& cam, int n_runs, std::uint64_t seed) {
  Checkpoint ckpt;
  try {
    ckpt = load_checkpoint(path);
  } catch (const std::exception& e) {
    throw EvaluationError(std::string("cannot evaluate checkpoint: ") + e.what());
  }
  return evaluate_checkpoint(ckpt.policy, task, cam, n_runs, seed);
}

std::optional<double> standard_error(const std::vector<double>& v) {
  if (v.size() < 2) return std::nullopt;
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
}

std::uint64_t study_hash(const ExperimentGrid& grid) {
  ExperimentGrid g = grid;
  g.workers = 1;
  return config_hash(g.to_tree());
}

CellResult run_cell(const ExperimentGrid& grid, Condition condition, std::optional<int> budget,
                    std::uint64_t seed, const std::filesystem::path& out_dir) {
  CellResult cell;
  cell.condition = condition;
  cell.budget = is_imitation(condition) ? budget : std::nullopt;
  cell.seed = seed;
  const std::filesystem::path rel = cell_dir(condition, cell.budget, seed);
  const std::filesystem::path dir = out_dir / rel;

  try {
    std::filesystem::create_directories(dir);
    if (is_imitation(condition)) {
      if (!budget) throw ConfigError("imitation cell requires a budget");
      SessionConfig sc = grid.session;
      sc.mode = session_mode_for(condition);
      sc.n_episodes = *budget;
      sc.seed = seed;
      sc.actor = ActorKind::SyntheticOracle;
      TrainerConfig tc = grid.trainer;
      tc.seed = seed;
      OracleConfig oc = grid.oracle;
      oc.seed = seed;

      Rng init_rng = make_rng(seed, 0x696e6974);
      Mlp policy = Mlp::policy_network();
      policy.init_he_normal(init_rng);
      OracleActor actor(oc, grid.task, grid.camera);
      HumanDataset dataset(dir / "dataset.csv", HumanDataset::OpenMode::Truncate);
      SessionOutputs outputs;
      outputs.directory = dir;
      outputs.checkpoint_prefix = rel.generic_string() + "/";
      outputs.config_hash = study_hash(grid);
      const SessionResult session = run_session(sc, grid.task, grid.camera, tc, actor, dataset,
                                                std::move(policy), outputs);
      cell.episodes = static_cast<int>(session.episodes.size());
      cell.human_samples = dataset.size();
      if (session.error) throw std::runtime_error(*session.error);
      if (session.episodes.empty()) throw std::runtime_error("session produced no episodes");

      const auto& last = session.episodes.back();
      cell.checkpoint = (rel / last.checkpoint->filename()).generic_string();
      cell.completion = evaluate_checkpoint_file(*last.checkpoint, grid.task, grid.camera,
                                                 grid.eval_runs, grid.eval_seed);
      if (grid.per_episode_curves) {
        for (const auto& ep : session.episodes) {
          const double c = ep.episode == last.episode
                               ? *cell.completion
                               : evaluate_checkpoint_file(*ep.checkpoint, grid.task, grid.camera,
                                                          grid.eval_runs, grid.eval_seed);
          cell.episode_curve.push_back({ep.episode, c, ep.dataset_size});
        }
      }
    } else if (condition == Condition::Random) {
      Rng rng = make_rng(seed, 0x72616e64);
      cell.completion = evaluate_policy([&rng](const Observation&) { return random_agent_action(rng); },
                                        grid.task, grid.camera, grid.eval_runs, grid.eval_seed);
    } else {
      PPOConfig pc = grid.ppo;
      pc.action_dims = dims_for(condition);
      pc.seed = seed;
      PpoRunResult run = train_ppo(pc, grid.task, grid.camera);
      cell.episodes = pc.total_episodes;
      cell.training_curve = run.curve;
      cell.final_rolling_success = run.final_rolling_success();
      Checkpoint ckpt;
      ckpt.policy = run.final_policy.mean;
      ckpt.config_hash = study_hash(grid);
      ckpt.tag = rel.generic_string() + "/final";
      save_checkpoint(dir / "final.ckpt", ckpt);
      cell.checkpoint = (rel / "final.ckpt").generic_string();
      cell.completion = evaluate_checkpoint_file(dir / "final.ckpt", grid.task, grid.camera,
                                                 grid.eval_runs, grid.eval_seed);
    }
  } catch (const std::exception& e) {
    cell.error = e.what();
  }
  return cell;
}

std::vector<CellResult> run_grid(const ExperimentGrid& grid, const std::filesystem::path& out_dir,
                                 const std::function<void(const CellResult&)>& progress) {
  grid.validate();
  std::filesystem::create_directories(out_dir);
  save_config(out_dir / "grid.ini", grid.to_tree());

  struct Job {
    Condition condition;
    std::optional<int> budget;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (Condition c : grid.conditions) {
    if (is_imitation(c)) {
      for (int b : grid.budgets)
        for (auto s : grid.seeds) jobs.push_back({c, b, s});
    } else {
      for (auto s : grid.seeds) jobs.push_back({c, std::nullopt, s});
    }
  }

  std::vector<CellResult> results(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex progress_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      results[i] = run_cell(grid, jobs[i].condition, jobs[i].budget, jobs[i].seed, out_dir);
      if (progress) {
        std::lock_guard lock(progress_mutex);
        progress(results[i]);
      }
    }
  };
  const unsigned n_workers = std::max(1u, std::min<unsigned>(grid.workers, jobs.size()));
  std::vector<std::thread> threads;
  for (unsigned w = 1; w < n_workers; ++w) threads.emplace_back(work);
  work();
  for (auto& t : threads) t.join();
  return results;
}

std::vector<ConditionSummary> summarize(const std::vector<CellResult>& results) {
  std::vector<std::pair<Condition, std::optional<int>>> order;
  std::map<std::pair<int, int>, std::vector<const CellResult*>> groups;
  auto key = [](Condition c, std::optional<int> b) {
    return std::make_pair(static_cast<int>(c), b.value_or(-1));
  };
  for (const auto& r : results) {
    if (r.error || !r.completion) continue;
    auto k = key(r.condition, r.budget);
    if (!groups.count(k)) order.emplace_back(r.condition, r.budget);
    groups[k].push_back(&r);
  }

  std::vector<ConditionSummary> out;
  for (const auto& [cond, budget] : order) {
    const auto& cells = groups[key(cond, budget)];
    ConditionSummary s;
    s.condition = cond;
    s.budget = budget;
    s.n_seeds = static_cast<int>(cells.size());
    std::vector<double> comp;
    std::vector<double> samples;
    bool all_samples = true;
    for (const auto* c : cells) {
      comp.push_back(*c->completion);
      if (c->human_samples)
        samples.push_back(static_cast<double>(*c->human_samples));
      else
        all_samples = false;
    }
    s.completion_mean = std::accumulate(comp.begin(), comp.end(), 0.0) / comp.size();
    s.completion_stderr = standard_error(comp);
    if (all_samples && is_imitation(cond)) {
      s.samples_mean = std::accumulate(samples.begin(), samples.end(), 0.0) / samples.size();
      s.samples_stderr = standard_error(samples);
    }
    out.push_back(s);
  }

  for (auto& s : out) {
    if (!s.samples_mean) continue;
    for (const auto& d : out) {
      if (d.condition != Condition::Demonstration || d.budget != s.budget || !d.samples_mean)
        continue;
      if (*d.samples_mean > 0.0) s.sample_reduction_vs_demo = 1.0 - *s.samples_mean / *d.samples_mean;
      if (*s.samples_mean > 0.0 && *d.samples_mean > 0.0 && d.completion_mean > 0.0) {
        s.completion_per_sample_ratio = (s.completion_mean / *s.samples_mean) /
                                        (d.completion_mean / *d.samples_mean);
      }
    }
  }
  return out;
}

std::string results_csv(const std::vector<CellResult>& results) {
  std::string out =
      "condition,budget,seed,episodes,completion,human_samples,final_rolling_success,"
      "checkpoint,error\n";
  for (const auto& r : results) {
    std::string err = r.error.value_or("");
    for (char& ch : err)
      if (ch == ',' || ch == '\n' || ch == '"') ch = ';';
    out += fmt::format("{},{},{},{},{},{},{},{},{}\n", to_string(r.condition),
                       opt_field(r.budget), r.seed, r.episodes, opt_field(r.completion),
                       opt_field(r.human_samples), opt_field(r.final_rolling_success),
                       r.checkpoint, err);
  }
  return out;
}

std::string summary_csv(const std::vector<ConditionSummary>& summary) {
  std::string out =
      "condition,budget,n_seeds,completion_mean,completion_stderr,human_samples_mean,"
      "human_samples_stderr,completion_per_sample_ratio,sample_reduction_vs_demo\n";
  for (const auto& s : summary) {
    out += fmt::format("{},{},{},{},{},{},{},{},{}\n", to_string(s.condition),
                       opt_field(s.budget), s.n_seeds, s.completion_mean,
                       opt_field(s.completion_stderr), opt_field(s.samples_mean),
                       opt_field(s.samples_stderr), opt_field(s.completion_per_sample_ratio),
                       opt_field(s.sample_reduction_vs_demo));
  }
  return out;
}

void emit_report(const std::vector<CellResult>& results, const std::filesystem::path& out_dir) {
  if (results.empty()) throw std::invalid_argument("emit_report: no results");
  std::filesystem::create_directories(out_dir);
  write_file(out_dir / "results.csv", results_csv(results));
  write_file(out_dir / "summary.csv", summary_csv(summarize(results)));

  std::string curves = "condition,budget,seed,episode,completion,human_samples\n";
  std::string ppo = "condition,seed,episode,success,rolling_success\n";
  for (const auto& r : results) {
    for (const auto& p : r.episode_curve)
      curves += fmt::format("{},{},{},{},{},{}\n", to_string(r.condition), opt_field(r.budget),
                            r.seed, p.episode, p.completion, p.human_samples);
    for (const auto& p : r.training_curve)
      ppo += fmt::format("{},{},{},{},{}\n", to_string(r.condition), r.seed, p.episode,
                         p.success ? 1 : 0, p.rolling_success);
  }
  write_file(out_dir / "episode_curves.csv", curves);
  write_file(out_dir / "ppo_curves.csv", ppo);
}

}  // namespace col
