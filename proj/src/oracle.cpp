#include "col/oracle.hpp"

#include <algorithm>
#include <cmath>

namespace col {

void OracleConfig::validate() const {
  // Linear in h on [0, inf): comparing slopes and intercepts is sufficient.
  if (!(release_offset < engage_offset) || !(release_slope <= engage_slope))
    throw ConfigError("oracle config: release threshold must stay below engage threshold");
  if (!(kp_horizontal >= 0.0) || !(descent_speed > 0.0) || !(action_noise_std >= 0.0))
    throw ConfigError("oracle config: gains must be non-negative");
}

ConfigTree OracleConfig::to_tree() const {
  ConfigTree t;
  put_double(t, "kp_horizontal", kp_horizontal);
  put_double(t, "descent_speed", descent_speed);
  put_double(t, "descent_gate_slope", descent_gate_slope);
  put_double(t, "descent_gate_offset", descent_gate_offset);
  put_double(t, "engage_slope", engage_slope);
  put_double(t, "engage_offset", engage_offset);
  put_double(t, "release_slope", release_slope);
  put_double(t, "release_offset", release_offset);
  put_double(t, "border_margin_px", border_margin_px);
  put_double(t, "action_noise_std", action_noise_std);
  t.put("seed", seed);
  return t;
}

OracleConfig OracleConfig::from_tree(const ConfigTree& t) {
  OracleConfig c;
  c.kp_horizontal = read_double(t, "kp_horizontal", c.kp_horizontal);
  c.descent_speed = read_double(t, "descent_speed", c.descent_speed);
  c.descent_gate_slope = read_double(t, "descent_gate_slope", c.descent_gate_slope);
  c.descent_gate_offset = read_double(t, "descent_gate_offset", c.descent_gate_offset);
  c.engage_slope = read_double(t, "engage_slope", c.engage_slope);
  c.engage_offset = read_double(t, "engage_offset", c.engage_offset);
  c.release_slope = read_double(t, "release_slope", c.release_slope);
  c.release_offset = read_double(t, "release_offset", c.release_offset);
  c.border_margin_px = read_double(t, "border_margin_px", c.border_margin_px);
  c.action_noise_std = read_double(t, "action_noise_std", c.action_noise_std);
  c.seed = read_uint(t, "seed", c.seed);
  c.validate();
  return c;
}

double horizontal_error(const VehicleState& state) {
  return state.position.head<2>().norm();
}

ActionCommand oracle_action(const VehicleState& state, const OracleConfig& cfg,
                            const TaskConfig& task, Rng& rng) {
  const double yaw = state.attitude.z();
  const Eigen::Vector2d p = state.position.head<2>();
  const double off_right = std::cos(yaw) * p.x() + std::sin(yaw) * p.y();
  const double off_forward = -std::sin(yaw) * p.x() + std::cos(yaw) * p.y();

  ActionCommand a;
  a.roll = -cfg.kp_horizontal * off_right / task.max_lateral_speed;
  a.pitch = -cfg.kp_horizontal * off_forward / task.max_longitudinal_speed;
  a.yaw = 0.0;
  const double descent = horizontal_error(state) < cfg.descent_gate(state.position.z())
                             ? cfg.descent_speed
                             : 0.15 * cfg.descent_speed;
  a.throttle = -descent / task.max_heave_speed;
  a = a.clamped();

  if (cfg.action_noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, cfg.action_noise_std);
    a.roll += noise(rng);
    a.pitch += noise(rng);
    a.yaw += noise(rng);
    a.throttle += noise(rng);
    a = a.clamped();
  }
  return a;
}

GateState intervention_gate(const VehicleState& state, const PadDetection& det,
                            GateState gate, const OracleConfig& cfg,
                            const CameraConfig& cam) {
  const double h = state.position.z();
  const double err = horizontal_error(state);
  if (!gate.engaged) {
    const double m = cfg.border_margin_px;
    const bool near_border = det.u < m || det.u > cam.image_width - m || det.v < m ||
                             det.v > cam.image_height - m;
    if (err > cfg.engage_threshold(h) || near_border) gate.engaged = true;
  } else if (err < cfg.release_threshold(h)) {
    gate.engaged = false;
  }
  return gate;
}

}  // namespace col
