#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "col/checkpoint.hpp"
#include "col/rng.hpp"
#include "col/session.hpp"
#include "json.hpp"

using namespace col;
namespace fs = std::filesystem;

namespace {

Mlp seeded_policy(std::uint64_t seed) {
  auto net = Mlp::policy_network();
  Rng rng = make_rng(seed, 0x696e6974);
  net.init_he_normal(rng);
  return net;
}

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / "col_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Overrides on a fixed set of step indices with a scripted action.
class ScriptedActor final : public Actor {
 public:
  std::set<int> hold;
  bool always = false;
  int calls = 0;
  std::optional<ActionCommand> human_action(const VehicleState& s, const PadDetection&,
                                            SampleSource) override {
    ++calls;
    if (always || hold.count(s.time_step)) return action_for(s.time_step);
    return std::nullopt;
  }
  static ActionCommand action_for(int step) {
    return {0.01 * (step % 7), -0.02 * (step % 5), 0.0, -0.3};
  }
};

struct Rig {
  TaskConfig task;
  CameraConfig cam;
  Simulator sim{task};
  PadTracker tracker{cam, task.pad_radius};
  ObservationScales scales = ObservationScales::from_config(task, cam);
  PolicySnapshot snapshot{seeded_policy(1), 0, 0, 0};
  Rig() {
    Rng rng = make_rng(0, 0);
    sim.reset(rng);
  }
  ActionCommand agent_action() {
    const auto det = project_pad(sim.state(), cam, task.pad_radius, tracker.last());
    const auto obs = assemble_observation(sim.state(), det, scales);
    const auto out = snapshot.policy.forward_one(Eigen::Map<const Eigen::VectorXd>(obs.data(), 15));
    return {out[0], out[1], out[2], out[3]};
  }
};

}  // namespace

TEST_CASE("override executes and records the human action") {
  Rig rig;
  HumanDataset ds;
  ScriptedActor actor;
  actor.always = true;
  const auto out = interaction_step(rig.snapshot, rig.sim, rig.tracker, rig.scales, actor, ds, 1,
                                    SampleSource::Intervention);
  CHECK(out.source == ControlSource::Human);
  CHECK(out.executed == ScriptedActor::action_for(0));
  CHECK(out.recorded);
  REQUIRE(ds.size() == 1);
  CHECK(ds.at(0).action == ScriptedActor::action_for(0).to_array());
  CHECK(ds.at(0).source == SampleSource::Intervention);
  CHECK(ds.at(0).step == 0);
}

TEST_CASE("released override executes the agent and records nothing") {
  Rig rig;
  HumanDataset ds;
  ScriptedActor actor;
  const auto expected = rig.agent_action();
  const auto out = interaction_step(rig.snapshot, rig.sim, rig.tracker, rig.scales, actor, ds, 1,
                                    SampleSource::Intervention);
  CHECK(out.source == ControlSource::Agent);
  CHECK(out.executed == expected);
  CHECK_FALSE(out.recorded);
  CHECK(ds.size() == 0);
  CHECK(actor.calls == 1);
}

TEST_CASE("rows correspond one-to-one with human steps") {
  Rig rig;
  HumanDataset ds;
  ScriptedActor actor;
  actor.hold = {2, 3, 4, 10, 11, 40, 41, 42, 43};
  int human = 0;
  while (!rig.sim.status().done() && rig.sim.state().time_step < 60) {
    const int step = rig.sim.state().time_step;
    const auto out = interaction_step(rig.snapshot, rig.sim, rig.tracker, rig.scales, actor, ds,
                                      1, SampleSource::Intervention);
    if (out.source == ControlSource::Human) {
      ++human;
      REQUIRE(out.executed == ScriptedActor::action_for(step));
    }
  }
  CHECK(human == 9);
  REQUIRE(ds.size() == 9);
  const auto rows = ds.snapshot();
  for (std::size_t i = 0; i < rows.size(); ++i) CHECK(actor.hold.count(rows[i].step) == 1);
}

TEST_CASE("a full demonstration episode records every step") {
  Rig rig;
  HumanDataset ds;
  OracleConfig ocfg;
  OracleActor actor(ocfg, rig.task, rig.cam);
  actor.begin_episode(0, SampleSource::Demonstration);
  int steps = 0;
  while (!rig.sim.status().done()) {
    interaction_step(rig.snapshot, rig.sim, rig.tracker, rig.scales, actor, ds, 1,
                     SampleSource::Demonstration);
    ++steps;
  }
  CHECK(rig.sim.status().success());
  CHECK(ds.size() == static_cast<std::size_t>(steps));
}

TEST_CASE("storage failure suppresses the agent and hovers") {
  if (!fs::exists("/dev/full")) return;
  Rig rig;
  HumanDataset ds("/dev/full", HumanDataset::OpenMode::Append);
  ScriptedActor actor;
  actor.always = true;
  const auto out = interaction_step(rig.snapshot, rig.sim, rig.tracker, rig.scales, actor, ds, 1,
                                    SampleSource::Demonstration);
  CHECK(out.storage_failed);
  CHECK(out.executed == ActionCommand{});
}

TEST_CASE("session phase schedule") {
  SessionConfig cfg;
  cfg.mode = SessionMode::CycleOfLearning;
  cfg.n_episodes = 4;
  CHECK(cfg.phase_for(0) == SampleSource::Demonstration);
  CHECK(cfg.phase_for(1) == SampleSource::Demonstration);
  CHECK(cfg.phase_for(2) == SampleSource::Intervention);
  CHECK(cfg.phase_for(3) == SampleSource::Intervention);
  cfg.n_episodes = 5;
  CHECK(cfg.phase_for(2) == SampleSource::Demonstration);
  CHECK(cfg.phase_for(3) == SampleSource::Intervention);
  cfg.n_episodes = 20;
  int demos = 0;
  for (int e = 0; e < 20; ++e) demos += cfg.phase_for(e) == SampleSource::Demonstration;
  CHECK(demos == 10);

  cfg.n_episodes = 0;
  CHECK_THROWS(cfg.validate());
  cfg.n_episodes = 3;
  cfg.performance_threshold = 0.0;
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("cycle of learning session with the oracle") {
  const auto dir = fresh_dir("col4");
  SessionConfig cfg;
  cfg.mode = SessionMode::CycleOfLearning;
  cfg.n_episodes = 4;
  TaskConfig task;
  CameraConfig cam;
  OracleActor actor(OracleConfig{}, task, cam);
  HumanDataset ds(dir / "dataset.csv", HumanDataset::OpenMode::Truncate);
  SessionOutputs out;
  out.directory = dir;
  const auto res = run_session(cfg, task, cam, TrainerConfig{}, actor, ds, seeded_policy(0), out);
  REQUIRE_FALSE(res.error);
  REQUIRE(res.episodes.size() == 4);
  CHECK(res.episodes[0].phase == SampleSource::Demonstration);
  CHECK(res.episodes[1].phase == SampleSource::Demonstration);
  CHECK(res.episodes[2].phase == SampleSource::Intervention);
  CHECK(res.episodes[3].phase == SampleSource::Intervention);
  std::size_t human = 0;
  for (const auto& e : res.episodes) {
    human += e.human_steps;
    CHECK(fs::exists(episode_checkpoint_path(dir, e.episode)));
  }
  CHECK(human == ds.size());
  CHECK(res.human_samples == ds.size());
  CHECK(ds.count_source(SampleSource::Demonstration) ==
        res.episodes[0].human_steps + res.episodes[1].human_steps);

  // Log records: one per step plus one per episode.
  std::ifstream log(dir / "session.ndjson");
  std::string line;
  int steps = 0, episodes = 0, human_logged = 0;
  while (std::getline(log, line)) {
    const auto j = nlohmann::json::parse(line);
    if (j["type"] == "step") {
      ++steps;
      human_logged += j["source"] == "human";
      CHECK(j["recorded"] == (j["source"] == "human"));
    }
    if (j["type"] == "episode") ++episodes;
  }
  int total_steps = 0;
  for (const auto& e : res.episodes) total_steps += e.steps;
  CHECK(steps == total_steps);
  CHECK(episodes == 4);
  CHECK(human_logged == static_cast<int>(human));
}

TEST_CASE("demonstration-only session saves every checkpoint") {
  const auto dir = fresh_dir("demo8");
  SessionConfig cfg;
  cfg.mode = SessionMode::DemonstrationOnly;
  cfg.n_episodes = 8;
  TaskConfig task;
  CameraConfig cam;
  OracleActor actor(OracleConfig{}, task, cam);
  HumanDataset ds(dir / "dataset.csv", HumanDataset::OpenMode::Truncate);
  SessionOutputs out;
  out.directory = dir;
  out.checkpoint_prefix = "demo/";
  out.config_hash = 99;
  const auto res = run_session(cfg, task, cam, TrainerConfig{}, actor, ds, seeded_policy(0), out);
  REQUIRE(res.episodes.size() == 8);
  for (int e = 1; e <= 8; ++e) {
    const auto ck = load_checkpoint(episode_checkpoint_path(dir, e));
    CHECK(ck.config_hash == 99);
    CHECK(ck.tag == "demo/e" + std::to_string(e));
  }
  CHECK(ds.count_source(SampleSource::Demonstration) == ds.size());
  CHECK(ds.size() > 0);
  CHECK(load_samples(dir / "dataset.csv").size() == ds.size());
}

TEST_CASE("interventions need fewer samples than demonstrations") {
  TaskConfig task;
  CameraConfig cam;
  auto samples = [&](SessionMode mode) {
    SessionConfig cfg;
    cfg.mode = mode;
    cfg.n_episodes = 4;
    cfg.seed = 3;
    OracleActor actor(OracleConfig{}, task, cam);
    HumanDataset ds;
    return run_session(cfg, task, cam, TrainerConfig{}, actor, ds, seeded_policy(3)).human_samples;
  };
  const auto demo = samples(SessionMode::DemonstrationOnly);
  const auto col = samples(SessionMode::CycleOfLearning);
  const auto inter = samples(SessionMode::InterventionOnly);
  CHECK(inter < demo);
  CHECK(col <= demo);
  CHECK(inter <= col);
}

TEST_CASE("absent actor gives a pure agent session") {
  SessionConfig cfg;
  cfg.mode = SessionMode::InterventionOnly;
  cfg.n_episodes = 2;
  AbsentActor actor;
  HumanDataset ds;
  const auto res =
      run_session(cfg, TaskConfig{}, CameraConfig{}, TrainerConfig{}, actor, ds, seeded_policy(0));
  CHECK(ds.size() == 0);
  for (const auto& e : res.episodes) CHECK(e.human_steps == 0);
  CHECK(res.final_snapshot->version == 0);
}

TEST_CASE("alpha below one can stop a session early") {
  // Starts over the pad with a policy that only descends.
  TaskConfig task;
  task.start_xy_radius = 0.0;
  SessionConfig cfg;
  cfg.mode = SessionMode::InterventionOnly;
  cfg.n_episodes = 5;
  cfg.performance_threshold = 0.5;
  Mlp sink({15, 4}, Activation::Relu, Activation::Tanh);
  sink.bias(0) << 0, 0, 0, -2.0;
  AbsentActor actor;
  HumanDataset ds;
  const auto res = run_session(cfg, task, CameraConfig{}, TrainerConfig{}, actor, ds, sink);
  CHECK(res.stopped_early);
  CHECK(res.episodes.size() == 1);
  CHECK(res.task_performance == 1.0);
}

TEST_CASE("step latency stays below the control period with a threaded trainer") {
  SessionConfig cfg;
  cfg.mode = SessionMode::CycleOfLearning;
  cfg.n_episodes = 2;
  cfg.threaded_trainer = true;
  TaskConfig task;
  CameraConfig cam;
  OracleActor actor(OracleConfig{}, task, cam);
  HumanDataset ds;
  const auto res = run_session(cfg, task, cam, TrainerConfig{}, actor, ds, seeded_policy(0));
  REQUIRE_FALSE(res.error);
  CHECK(res.max_step_latency_s < task.dt_agent);
  CHECK(res.final_snapshot->version >= 1);
}
