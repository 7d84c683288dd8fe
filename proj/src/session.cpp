#include "col/session.hpp"

#include <chrono>
#include <thread>

#include <fmt/format.h>

#include "col/checkpoint.hpp"
#include "json.hpp"

namespace col {

std::string_view to_string(SessionMode mode) {
  switch (mode) {
    case SessionMode::DemonstrationOnly: return "demo";
    case SessionMode::InterventionOnly: return "intervene";
    case SessionMode::CycleOfLearning: return "col";
  }
  return "unknown";
}

std::string_view to_string(ActorKind kind) {
  return kind == ActorKind::LiveHuman ? "live_human" : "synthetic_oracle";
}

std::string_view to_string(ControlSource source) {
  return source == ControlSource::Human ? "human" : "agent";
}

SessionMode parse_session_mode(std::string_view text) {
  if (text == "demo" || text == "DemonstrationOnly") return SessionMode::DemonstrationOnly;
  if (text == "intervene" || text == "InterventionOnly") return SessionMode::InterventionOnly;
  if (text == "col" || text == "CycleOfLearning") return SessionMode::CycleOfLearning;
  throw ConfigError("unknown session mode '" + std::string(text) + "'");
}

ActorKind parse_actor_kind(std::string_view text) {
  if (text == "live_human" || text == "LiveHuman") return ActorKind::LiveHuman;
  if (text == "synthetic_oracle" || text == "SyntheticOracle") return ActorKind::SyntheticOracle;
  throw ConfigError("unknown actor '" + std::string(text) + "'");
}

OracleActor::OracleActor(OracleConfig cfg, TaskConfig task, CameraConfig cam)
    : cfg_(cfg), task_(task), cam_(cam), rng_(make_rng(cfg.seed, 0x6f72)) {}

void OracleActor::begin_episode(int episode, SampleSource) {
  gate_ = {};
  rng_ = make_rng(cfg_.seed, 0x6f720000ULL + static_cast<std::uint64_t>(episode));
}

std::optional<ActionCommand> OracleActor::human_action(const VehicleState& state,
                                                       const PadDetection& detection,
                                                       SampleSource phase) {
  if (phase == SampleSource::Intervention) {
    gate_ = intervention_gate(state, detection, gate_, cfg_, cam_);
    if (!gate_.engaged) return std::nullopt;
  }
  return oracle_action(state, cfg_, task_, rng_);
}

void SessionConfig::validate() const {
  if (n_episodes < 1) throw ConfigError("session config: n_episodes must be >= 1");
  if (!(performance_threshold > 0.0 && performance_threshold <= 1.0))
    throw ConfigError("session config: performance_threshold must be in (0, 1]");
}

SampleSource SessionConfig::phase_for(int episode) const {
  switch (mode) {
    case SessionMode::DemonstrationOnly: return SampleSource::Demonstration;
    case SessionMode::InterventionOnly: return SampleSource::Intervention;
    case SessionMode::CycleOfLearning:
      // ceil(n/2) demonstrations, then interventions.
      return episode < (n_episodes + 1) / 2 ? SampleSource::Demonstration
                                            : SampleSource::Intervention;
  }
  return SampleSource::Demonstration;
}

ConfigTree SessionConfig::to_tree() const {
  ConfigTree t;
  t.put("mode", std::string(to_string(mode)));
  t.put("n_episodes", n_episodes);
  t.put("actor", std::string(to_string(actor)));
  put_double(t, "performance_threshold", performance_threshold);
  t.put("seed", seed);
  t.put("threaded_trainer", threaded_trainer ? 1 : 0);
  t.put("epochs_per_step", epochs_per_step);
  t.put("sync_at_episode_end", sync_at_episode_end ? 1 : 0);
  t.put("real_time", real_time ? 1 : 0);
  return t;
}

SessionConfig SessionConfig::from_tree(const ConfigTree& t) {
  SessionConfig c;
  c.mode = parse_session_mode(read_string(t, "mode", std::string(to_string(c.mode))));
  c.n_episodes = static_cast<int>(read_int(t, "n_episodes", c.n_episodes));
  c.actor = parse_actor_kind(read_string(t, "actor", std::string(to_string(c.actor))));
  c.performance_threshold = read_double(t, "performance_threshold", c.performance_threshold);
  c.seed = read_uint(t, "seed", c.seed);
  c.threaded_trainer = read_int(t, "threaded_trainer", c.threaded_trainer) != 0;
  c.epochs_per_step = static_cast<std::size_t>(read_uint(t, "epochs_per_step", c.epochs_per_step));
  c.sync_at_episode_end = read_int(t, "sync_at_episode_end", c.sync_at_episode_end) != 0;
  c.real_time = read_int(t, "real_time", c.real_time) != 0;
  c.validate();
  return c;
}

StepOutcome interaction_step(const PolicySnapshot& snapshot, Simulator& sim,
                             PadTracker& tracker, const ObservationScales& scales,
                             Actor& actor, HumanDataset& dataset, int episode,
                             SampleSource phase) {
  const VehicleState& state = sim.state();
  const PadDetection det = tracker.update(state);
  const Observation obs = assemble_observation(state, det, scales);
  const Eigen::VectorXd agent =
      snapshot.policy.forward_one(Eigen::Map<const Eigen::VectorXd>(obs.data(), obs.size()));

  StepOutcome out;
  out.executed = ActionCommand{agent[0], agent[1], agent[2], agent[3]}.clamped();

  if (auto human = actor.human_action(state, det, phase)) {
    out.source = ControlSource::Human;
    out.executed = human->clamped();
    HumanSample sample;
    sample.episode_id = episode;
    sample.step = state.time_step;
    sample.source = phase;
    sample.observation = obs;
    sample.action = out.executed.to_array();
    try {
      dataset.append(sample);
      out.recorded = true;
    } catch (const StorageError&) {
      out.storage_failed = true;
      out.executed = ActionCommand{};  // hover
    }
  }
  out.status = sim.step(out.executed);
  return out;
}

std::filesystem::path episode_checkpoint_path(const std::filesystem::path& dir, int episode) {
  return dir / fmt::format("episode_{:03d}.ckpt", episode);
}

namespace {

class SessionLog {
 public:
  explicit SessionLog(const std::optional<std::filesystem::path>& dir) {
    if (dir) {
      out_.open(*dir / "session.ndjson", std::ios::trunc);
      if (!out_) throw StorageError("cannot open session log in " + dir->string());
    }
  }
  void step(int episode, int step, const StepOutcome& o, double loss) {
    if (!out_.is_open()) return;
    nlohmann::ordered_json j;
    j["type"] = "step";
    j["episode"] = episode;
    j["step"] = step;
    j["source"] = to_string(o.source);
    j["recorded"] = o.recorded;
    j["loss"] = loss;
    j["status"] = to_string(o.status.tag);
    out_ << j.dump() << '\n';
  }
  void episode(const EpisodeSummary& s, const TrainerStatus& t) {
    if (!out_.is_open()) return;
    nlohmann::ordered_json j;
    j["type"] = "episode";
    j["episode"] = s.episode;
    j["phase"] = to_string(s.phase);
    j["steps"] = s.steps;
    j["human_steps"] = s.human_steps;
    j["status"] = to_string(s.status.tag);
    j["touchdown_offset"] = s.status.touchdown_offset
                                ? nlohmann::ordered_json(*s.status.touchdown_offset)
                                : nlohmann::ordered_json(nullptr);
    j["dataset_size"] = s.dataset_size;
    j["snapshot_version"] = s.snapshot_version;
    j["trainer_epochs"] = t.total_epochs;
    out_ << j.dump() << '\n' << std::flush;
  }
  void note(const std::string& text) {
    if (!out_.is_open()) return;
    nlohmann::ordered_json j;
    j["type"] = "note";
    j["message"] = text;
    out_ << j.dump() << '\n' << std::flush;
  }

 private:
  std::ofstream out_;
};

}  // namespace

SessionResult run_session(const SessionConfig& cfg, const TaskConfig& task,
                          const CameraConfig& cam, const TrainerConfig& trainer_cfg,
                          Actor& actor, HumanDataset& dataset, Mlp initial_policy,
                          const SessionOutputs& outputs) {
  using Clock = std::chrono::steady_clock;
  cfg.validate();
  validate_task_camera(task, cam);
  if (outputs.directory) std::filesystem::create_directories(*outputs.directory);

  SessionResult result;
  SessionLog log(outputs.directory);
  Simulator sim(task);
  PadTracker tracker(cam, task.pad_radius);
  const ObservationScales scales = ObservationScales::from_config(task, cam);
  PolicyTrainer trainer(dataset, std::move(initial_policy), trainer_cfg);
  std::unique_ptr<UpdatePolicyWorker> worker;
  if (cfg.threaded_trainer) worker = std::make_unique<UpdatePolicyWorker>(trainer);

  const auto tick = std::chrono::duration_cast<Clock::duration>(
      std::chrono::duration<double>(task.dt_agent));
  std::size_t autonomous_successes = 0;

  for (int e = 0; e < cfg.n_episodes; ++e) {
    const SampleSource phase = cfg.phase_for(e);
    Rng start_rng = make_rng(cfg.seed, 0x65700000ULL + static_cast<std::uint64_t>(e));
    sim.reset(start_rng);
    tracker.reset();
    actor.begin_episode(e, phase);

    EpisodeSummary summary;
    summary.episode = e + 1;
    summary.phase = phase;
    auto next_tick = Clock::now();
    bool storage_failed = false;

    while (!sim.status().done()) {
      const auto t0 = Clock::now();
      const auto snapshot = trainer.latest();
      const int step_index = sim.state().time_step;
      StepOutcome outcome;
      try {
        outcome = interaction_step(*snapshot, sim, tracker, scales, actor, dataset,
                                   e + 1, phase);
      } catch (const std::exception& ex) {
        result.error = fmt::format("episode {} step {}: {}", e + 1, step_index, ex.what());
        break;
      }
      const double latency = std::chrono::duration<double>(Clock::now() - t0).count();
      result.max_step_latency_s = std::max(result.max_step_latency_s, latency);

      summary.steps += 1;
      if (outcome.source == ControlSource::Human) summary.human_steps += 1;
      const TrainerStatus tstat = trainer.status();
      log.step(e + 1, step_index, outcome, tstat.last_loss);
      if (outputs.on_step) {
        outputs.on_step(StepEvent{e + 1, phase, &sim.state(), &tracker.last(), &outcome, tstat});
      }
      if (outcome.storage_failed) {
        storage_failed = true;
        result.error = fmt::format("episode {} step {}: dataset storage failed", e + 1,
                                   step_index);
        break;
      }

      if (worker) {
        if (outcome.recorded) worker->notify();
      } else {
        trainer.advance(cfg.epochs_per_step);
      }
      if (cfg.real_time) {
        next_tick += tick;
        std::this_thread::sleep_until(next_tick);
      }
    }

    if (cfg.sync_at_episode_end && !result.error) {
      if (worker)
        worker->wait_idle();
      else
        trainer.drain();
    }
    const TrainerStatus tstat = trainer.status();
    const auto snapshot = trainer.latest();
    summary.status = sim.status();
    summary.dataset_size = dataset.size();
    summary.snapshot_version = snapshot->version;
    if (outputs.directory) {
      const auto path = episode_checkpoint_path(*outputs.directory, e + 1);
      Checkpoint ckpt;
      ckpt.policy = snapshot->policy;
      if (!worker || tstat.halted || trainer.idle()) ckpt.optimizer = trainer.optimizer();
      ckpt.config_hash = outputs.config_hash;
      ckpt.tag = fmt::format("{}e{}", outputs.checkpoint_prefix, e + 1);
      save_checkpoint(path, ckpt);
      summary.checkpoint = path;
    }
    log.episode(summary, tstat);
    result.episodes.push_back(summary);

    if (tstat.halted) {
      result.trainer_halted = true;
      log.note("trainer halted on non-finite loss; keeping last good snapshot");
    }
    if (result.error || storage_failed) {
      log.note(*result.error);
      break;
    }

    // Task performance counts only landings the agent flew without help.
    if (summary.status.success() && summary.human_steps == 0) ++autonomous_successes;
    result.task_performance =
        static_cast<double>(autonomous_successes) / static_cast<double>(result.episodes.size());
    if (result.task_performance >= cfg.performance_threshold) {
      result.stopped_early = e + 1 < cfg.n_episodes;
      if (result.stopped_early) break;
    }
  }

  if (worker) worker->stop();
  result.human_samples = dataset.size();
  result.final_snapshot = trainer.latest();
  return result;
}

}  // namespace col
