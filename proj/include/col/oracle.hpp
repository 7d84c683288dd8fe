#pragma once

#include <cstdint>

#include "col/config.hpp"
#include "col/perception.hpp"
#include "col/rng.hpp"
#include "col/sim.hpp"

namespace col {

// Scripted landing controller standing in for a human operator. Thresholds
// are linear in height h: threshold(h) = slope * h + offset.
struct OracleConfig {
  double kp_horizontal = 0.8;  // 1/s
  double descent_speed = 0.6;  // m/s
  double descent_gate_slope = 0.4;
  double descent_gate_offset = 0.2;
  double engage_slope = 0.20;
  double engage_offset = 0.30;
  double release_slope = 0.10;
  double release_offset = 0.15;
  double border_margin_px = 20.0;
  double action_noise_std = 0.05;
  std::uint64_t seed = 0;

  double descent_gate(double h) const { return descent_gate_slope * h + descent_gate_offset; }
  double engage_threshold(double h) const { return engage_slope * h + engage_offset; }
  double release_threshold(double h) const { return release_slope * h + release_offset; }

  // Requires release < engage for every h >= 0.
  void validate() const;
  ConfigTree to_tree() const;
  static OracleConfig from_tree(const ConfigTree& tree);
};

struct GateState {
  bool engaged = false;
};

// Horizontal distance from the vehicle to the pad center.
double horizontal_error(const VehicleState& state);

ActionCommand oracle_action(const VehicleState& state, const OracleConfig& cfg,
                            const TaskConfig& task, Rng& rng);

// Hysteresis: engage above engage_threshold(h) or when the detection is
// within border_margin_px of the image border; release below
// release_threshold(h).
GateState intervention_gate(const VehicleState& state, const PadDetection& det,
                            GateState gate, const OracleConfig& cfg,
                            const CameraConfig& cam);

}  // namespace col
