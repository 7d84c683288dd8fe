#include "col/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace col {

namespace {

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  return a <= -std::numbers::pi ? a + 2.0 * std::numbers::pi : a;
}

// Unit vectors of the body-right and body-forward axes in the world frame.
Eigen::Vector2d body_right(double yaw) { return {std::cos(yaw), std::sin(yaw)}; }
Eigen::Vector2d body_forward(double yaw) { return {-std::sin(yaw), std::cos(yaw)}; }

constexpr double kMaxTilt = std::numbers::pi / 2.0 - 1e-3;

}  // namespace

std::string_view to_string(EpisodeTag tag) {
  switch (tag) {
    case EpisodeTag::Running: return "running";
    case EpisodeTag::LandedSuccess: return "landed_success";
    case EpisodeTag::LandedFailure: return "landed_failure";
    case EpisodeTag::Timeout: return "timeout";
  }
  return "unknown";
}

ActionCommand ActionCommand::clamped() const {
  return {std::clamp(roll, -1.0, 1.0), std::clamp(pitch, -1.0, 1.0),
          std::clamp(yaw, -1.0, 1.0), std::clamp(throttle, -1.0, 1.0)};
}

bool ActionCommand::is_finite() const {
  return std::isfinite(roll) && std::isfinite(pitch) && std::isfinite(yaw) &&
         std::isfinite(throttle);
}

void TaskConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw ConfigError(std::string("task config: ") + name + " must be > 0");
  };
  positive(pad_radius, "pad_radius");
  positive(start_height, "start_height");
  positive(dt_agent, "dt_agent");
  positive(max_lateral_speed, "max_lateral_speed");
  positive(max_longitudinal_speed, "max_longitudinal_speed");
  positive(max_heading_rate, "max_heading_rate");
  positive(max_heave_speed, "max_heave_speed");
  positive(tau_velocity, "tau_velocity");
  positive(tau_yaw, "tau_yaw");
  if (!(start_xy_radius >= 0.0))
    throw ConfigError("task config: start_xy_radius must be >= 0");
  if (physics_substeps < 1)
    throw ConfigError("task config: physics_substeps must be >= 1");
  if (max_steps < 1) throw ConfigError("task config: max_steps must be >= 1");
}

ConfigTree TaskConfig::to_tree() const {
  ConfigTree t;
  put_double(t, "pad_radius", pad_radius);
  put_double(t, "start_height", start_height);
  put_double(t, "start_xy_radius", start_xy_radius);
  put_double(t, "dt_agent", dt_agent);
  t.put("physics_substeps", physics_substeps);
  put_double(t, "max_lateral_speed", max_lateral_speed);
  put_double(t, "max_longitudinal_speed", max_longitudinal_speed);
  put_double(t, "max_heading_rate", max_heading_rate);
  put_double(t, "max_heave_speed", max_heave_speed);
  put_double(t, "tau_velocity", tau_velocity);
  put_double(t, "tau_yaw", tau_yaw);
  t.put("max_steps", max_steps);
  t.put("rng_seed", rng_seed);
  return t;
}

TaskConfig TaskConfig::from_tree(const ConfigTree& t) {
  TaskConfig c;
  c.pad_radius = read_double(t, "pad_radius", c.pad_radius);
  c.start_height = read_double(t, "start_height", c.start_height);
  c.start_xy_radius = read_double(t, "start_xy_radius", c.start_xy_radius);
  c.dt_agent = read_double(t, "dt_agent", c.dt_agent);
  c.physics_substeps =
      static_cast<int>(read_int(t, "physics_substeps", c.physics_substeps));
  c.max_lateral_speed = read_double(t, "max_lateral_speed", c.max_lateral_speed);
  c.max_longitudinal_speed =
      read_double(t, "max_longitudinal_speed", c.max_longitudinal_speed);
  c.max_heading_rate = read_double(t, "max_heading_rate", c.max_heading_rate);
  c.max_heave_speed = read_double(t, "max_heave_speed", c.max_heave_speed);
  c.tau_velocity = read_double(t, "tau_velocity", c.tau_velocity);
  c.tau_yaw = read_double(t, "tau_yaw", c.tau_yaw);
  c.max_steps = static_cast<int>(read_int(t, "max_steps", c.max_steps));
  c.rng_seed = read_uint(t, "rng_seed", c.rng_seed);
  c.validate();
  return c;
}

VelocityCommand autopilot_map(const ActionCommand& action, const TaskConfig& cfg) {
  if (!action.is_finite()) throw InvalidActionError("non-finite action command");
  const ActionCommand a = action.clamped();
  return {a.roll * cfg.max_lateral_speed, a.pitch * cfg.max_longitudinal_speed,
          a.yaw * cfg.max_heading_rate, a.throttle * cfg.max_heave_speed};
}

VehicleState step_dynamics(const VehicleState& state, const VelocityCommand& cmd,
                           const TaskConfig& cfg) {
  VehicleState next = state;
  const double h = cfg.dt_agent / cfg.physics_substeps;
  const double velocity_gain = -std::expm1(-h / cfg.tau_velocity);
  const double yaw_gain = -std::expm1(-h / cfg.tau_yaw);

  Eigen::Vector2d accel_body = Eigen::Vector2d::Zero();
  for (int i = 0; i < cfg.physics_substeps; ++i) {
    const double yaw = next.attitude.z();
    const Eigen::Vector2d right = body_right(yaw);
    const Eigen::Vector2d forward = body_forward(yaw);
    Eigen::Vector3d target;
    target.head<2>() = cmd.v_lateral * right + cmd.v_longitudinal * forward;
    target.z() = cmd.v_heave;

    // Commanded horizontal acceleration of the lag filter, body frame.
    const Eigen::Vector2d accel_world =
        (target.head<2>() - next.velocity.head<2>()) / cfg.tau_velocity;
    accel_body = {accel_world.dot(right), accel_world.dot(forward)};

    next.velocity += (target - next.velocity) * velocity_gain;
    next.heading_rate += (cmd.heading_rate - next.heading_rate) * yaw_gain;
    next.attitude.z() = wrap_angle(next.attitude.z() + next.heading_rate * h);
    next.position += next.velocity * h;
    if (next.position.z() <= 0.0) {
      next.position.z() = 0.0;
      break;
    }
  }

  next.attitude.x() = std::clamp(accel_body.x() / kGravity, -kMaxTilt, kMaxTilt);
  next.attitude.y() = std::clamp(-accel_body.y() / kGravity, -kMaxTilt, kMaxTilt);
  Eigen::Vector3d delta = next.attitude - state.attitude;
  delta.z() = wrap_angle(delta.z());
  next.angular_rate = delta / cfg.dt_agent;
  next.time_step = state.time_step + 1;
  return next;
}

VehicleState reset_episode(const TaskConfig& cfg, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // Inverse-CDF sampling of the uniform disc.
  const double r = cfg.start_xy_radius * std::sqrt(unit(rng));
  const double theta = 2.0 * std::numbers::pi * unit(rng);
  VehicleState s;
  s.position = {r * std::cos(theta), r * std::sin(theta), cfg.start_height};
  return s;
}

EpisodeStatus check_termination(const VehicleState& state,
                                const Eigen::Vector2d& pad_center,
                                double success_radius, int max_steps) {
  if (state.position.z() <= 0.0) {
    const double offset = (state.position.head<2>() - pad_center).norm();
    return {offset <= success_radius ? EpisodeTag::LandedSuccess
                                     : EpisodeTag::LandedFailure,
            offset};
  }
  if (state.time_step >= max_steps) return {EpisodeTag::Timeout, std::nullopt};
  return {};
}

Simulator::Simulator(TaskConfig cfg) : cfg_(cfg) { cfg_.validate(); }

const VehicleState& Simulator::reset(Rng& rng) {
  state_ = reset_episode(cfg_, rng);
  status_ = {};
  return state_;
}

void Simulator::reset_to(const VehicleState& state) {
  state_ = state;
  status_ = check_termination(state_, Eigen::Vector2d::Zero(), cfg_.pad_radius,
                              cfg_.max_steps);
}

const EpisodeStatus& Simulator::step(const ActionCommand& action) {
  if (status_.done()) throw std::logic_error("step on a finished episode");
  state_ = step_dynamics(state_, autopilot_map(action, cfg_), cfg_);
  status_ = check_termination(state_, Eigen::Vector2d::Zero(), cfg_.pad_radius,
                              cfg_.max_steps);
  return status_;
}

}  // namespace col
