#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "col/dataset.hpp"
#include "col/oracle.hpp"
#include "col/perception.hpp"
#include "col/sim.hpp"
#include "col/trainer.hpp"

namespace col {

enum class SessionMode { DemonstrationOnly, InterventionOnly, CycleOfLearning };
enum class ActorKind { LiveHuman, SyntheticOracle };
enum class ControlSource { Agent, Human };

std::string_view to_string(SessionMode mode);
std::string_view to_string(ActorKind kind);
std::string_view to_string(ControlSource source);
// Accepts demo|intervene|col and the long enum names.
SessionMode parse_session_mode(std::string_view text);
ActorKind parse_actor_kind(std::string_view text);

// Supplies the human side of the arbitration. `human_action` returns a value
// exactly when the human controls this step. In a demonstration phase the
// override is implied and the actor only has to have input available.
class Actor {
 public:
  virtual ~Actor() = default;
  virtual void begin_episode(int /*episode*/, SampleSource /*phase*/) {}
  virtual std::optional<ActionCommand> human_action(const VehicleState& state,
                                                    const PadDetection& detection,
                                                    SampleSource phase) = 0;
};

// Never overrides: pure agent control.
class AbsentActor final : public Actor {
 public:
  std::optional<ActionCommand> human_action(const VehicleState&, const PadDetection&,
                                            SampleSource) override {
    return std::nullopt;
  }
};

// Synthetic human: flies every demonstration step and intervenes through
// the hysteresis gate otherwise.
class OracleActor final : public Actor {
 public:
  OracleActor(OracleConfig cfg, TaskConfig task, CameraConfig cam);

  void begin_episode(int episode, SampleSource phase) override;
  std::optional<ActionCommand> human_action(const VehicleState& state,
                                            const PadDetection& detection,
                                            SampleSource phase) override;
  const GateState& gate() const { return gate_; }

 private:
  OracleConfig cfg_;
  TaskConfig task_;
  CameraConfig cam_;
  GateState gate_;
  Rng rng_;
};

struct SessionConfig {
  SessionMode mode = SessionMode::CycleOfLearning;
  int n_episodes = 4;
  ActorKind actor = ActorKind::SyntheticOracle;
  double performance_threshold = 1.0;  // alpha
  std::uint64_t seed = 0;
  // Threaded: the trainer runs on its own thread. Lockstep: the loop grants
  // the trainer `epochs_per_step` optimizer steps after every agent step,
  // which reproduces a real-time trainer deterministically.
  bool threaded_trainer = false;
  std::size_t epochs_per_step = 20;
  // Wait for the trainer to consume the episode's samples before saving
  // the per-episode checkpoint.
  bool sync_at_episode_end = true;
  // Sleep so agent steps happen at 1/dt_agent Hz.
  bool real_time = false;

  void validate() const;
  // Demonstration or intervention phase of episode `e` (0-based).
  SampleSource phase_for(int episode) const;

  ConfigTree to_tree() const;
  static SessionConfig from_tree(const ConfigTree& tree);
};

struct StepOutcome {
  ActionCommand executed;
  ControlSource source = ControlSource::Agent;
  bool recorded = false;
  bool storage_failed = false;
  EpisodeStatus status;
};

// One pass of the interaction loop: observe, query the agent, arbitrate,
// record human steps, execute exactly one action. A storage failure
// suppresses the agent and commands a hover for this step instead.
StepOutcome interaction_step(const PolicySnapshot& snapshot, Simulator& sim,
                             PadTracker& tracker, const ObservationScales& scales,
                             Actor& actor, HumanDataset& dataset, int episode,
                             SampleSource phase);

struct EpisodeSummary {
  int episode = 0;
  SampleSource phase = SampleSource::Demonstration;
  int steps = 0;
  std::size_t human_steps = 0;
  EpisodeStatus status;
  std::size_t dataset_size = 0;
  std::uint64_t snapshot_version = 0;
  std::optional<std::filesystem::path> checkpoint;
};

struct SessionResult {
  std::vector<EpisodeSummary> episodes;
  std::size_t human_samples = 0;
  double task_performance = 0.0;
  bool stopped_early = false;
  bool trainer_halted = false;
  std::optional<std::string> error;
  std::shared_ptr<const PolicySnapshot> final_snapshot;
  double max_step_latency_s = 0.0;
};

// What the interaction loop reports after each step.
struct StepEvent {
  int episode = 0;
  SampleSource phase = SampleSource::Demonstration;
  const VehicleState* state = nullptr;
  const PadDetection* detection = nullptr;
  const StepOutcome* outcome = nullptr;
  TrainerStatus trainer;
};

struct SessionOutputs {
  // Directory for episode_<k>.ckpt files and session.ndjson; none = no files.
  std::optional<std::filesystem::path> directory;
  std::string checkpoint_prefix;  // tag prefix written into checkpoints
  std::uint64_t config_hash = 0;
  std::function<void(const StepEvent&)> on_step;
};

// Runs the interaction loop alongside the policy trainer for cfg.n_episodes
// episodes, saving a checkpoint after each one.
// The dataset must be empty or hold rows the policy should learn from.
SessionResult run_session(const SessionConfig& cfg, const TaskConfig& task,
                          const CameraConfig& cam, const TrainerConfig& trainer_cfg,
                          Actor& actor, HumanDataset& dataset, Mlp initial_policy,
                          const SessionOutputs& outputs = {});

// Checkpoint path of episode `episode` (1-based) inside a session directory.
std::filesystem::path episode_checkpoint_path(const std::filesystem::path& dir, int episode);

}  // namespace col
