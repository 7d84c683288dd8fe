#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string_view>

#include <Eigen/Core>

#include "col/config.hpp"
#include "col/rng.hpp"

namespace col {

constexpr double kGravity = 9.81;

// Pose and velocities of the quadrotor. World frame: z up, origin at the pad
// center on the ground. At yaw 0 the body-right axis is +x and body-forward
// is +y; positive yaw rotates the body counter-clockwise about +z.
struct VehicleState {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
  Eigen::Vector3d attitude = Eigen::Vector3d::Zero();  // roll, pitch, yaw
  Eigen::Vector3d angular_rate = Eigen::Vector3d::Zero();
  double heading_rate = 0.0;  // yaw-rate lag filter state, rad/s
  int time_step = 0;

  bool operator==(const VehicleState&) const = default;
};

// Stick command, each component nominally in [-1, 1].
struct ActionCommand {
  double roll = 0.0;
  double pitch = 0.0;
  double yaw = 0.0;
  double throttle = 0.0;

  std::array<double, 4> to_array() const { return {roll, pitch, yaw, throttle}; }
  static ActionCommand from_array(const std::array<double, 4>& a) {
    return {a[0], a[1], a[2], a[3]};
  }
  ActionCommand clamped() const;
  bool is_finite() const;

  bool operator==(const ActionCommand&) const = default;
};

struct VelocityCommand {
  double v_lateral = 0.0;       // m/s, body right
  double v_longitudinal = 0.0;  // m/s, body forward
  double heading_rate = 0.0;    // rad/s
  double v_heave = 0.0;         // m/s, world up

  bool operator==(const VelocityCommand&) const = default;
};

enum class EpisodeTag { Running, LandedSuccess, LandedFailure, Timeout };

std::string_view to_string(EpisodeTag tag);

struct EpisodeStatus {
  EpisodeTag tag = EpisodeTag::Running;
  std::optional<double> touchdown_offset;  // present iff landed

  bool done() const { return tag != EpisodeTag::Running; }
  bool success() const { return tag == EpisodeTag::LandedSuccess; }
};

struct TaskConfig {
  double pad_radius = 0.5;
  double start_height = 8.0;
  double start_xy_radius = 3.0;
  double dt_agent = 1.0 / 10.5;
  int physics_substeps = 10;
  double max_lateral_speed = 2.0;
  double max_longitudinal_speed = 2.0;
  double max_heading_rate = 1.0;
  double max_heave_speed = 1.5;
  double tau_velocity = 0.3;
  double tau_yaw = 0.3;
  int max_steps = 500;
  std::uint64_t rng_seed = 0;

  // Throws ConfigError on non-physical values.
  void validate() const;

  ConfigTree to_tree() const;
  static TaskConfig from_tree(const ConfigTree& tree);

  bool operator==(const TaskConfig&) const = default;
};

class InvalidActionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Autopilot: clamp each stick to [-1,1], then scale linearly by its limit.
VelocityCommand autopilot_map(const ActionCommand& action, const TaskConfig& cfg);

// Advances one agent step of cfg.dt_agent in cfg.physics_substeps sub-steps.
// Integration stops at the sub-step where the vehicle reaches the ground.
VehicleState step_dynamics(const VehicleState& state, const VelocityCommand& cmd,
                           const TaskConfig& cfg);

// Start pose: fixed height, (x, y) uniform on the start disc, at rest.
VehicleState reset_episode(const TaskConfig& cfg, Rng& rng);

EpisodeStatus check_termination(const VehicleState& state,
                                const Eigen::Vector2d& pad_center,
                                double success_radius = 0.5,
                                int max_steps = 500);

// Owns one vehicle for one episode at a time. Movable, not copyable: a
// simulator instance is advanced by exactly one interaction loop.
class Simulator {
 public:
  explicit Simulator(TaskConfig cfg);

  Simulator(const Simulator&) = delete;
  Simulator& operator=(const Simulator&) = delete;
  Simulator(Simulator&&) = default;
  Simulator& operator=(Simulator&&) = default;

  const VehicleState& reset(Rng& rng);
  void reset_to(const VehicleState& state);

  // Applies one stick command; throws InvalidActionError on non-finite input
  // and std::logic_error when the episode is already over.
  const EpisodeStatus& step(const ActionCommand& action);

  const VehicleState& state() const { return state_; }
  const EpisodeStatus& status() const { return status_; }
  const TaskConfig& config() const { return cfg_; }

 private:
  TaskConfig cfg_;
  VehicleState state_;
  EpisodeStatus status_;
};

}  // namespace col
