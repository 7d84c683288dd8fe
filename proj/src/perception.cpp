#include "col/perception.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace col {

double CameraConfig::focal_px() const {
  return cx() / std::tan(horizontal_fov / 2.0);
}

void CameraConfig::validate() const {
  if (image_width < 2 || image_height < 2)
    throw ConfigError("camera config: image must be at least 2x2 px");
  if (!(horizontal_fov > 0.0 && horizontal_fov < std::numbers::pi))
    throw ConfigError("camera config: horizontal_fov must be in (0, pi)");
}

ConfigTree CameraConfig::to_tree() const {
  ConfigTree t;
  t.put("image_width", image_width);
  t.put("image_height", image_height);
  put_double(t, "horizontal_fov", horizontal_fov);
  return t;
}

CameraConfig CameraConfig::from_tree(const ConfigTree& t) {
  CameraConfig c;
  c.image_width = static_cast<int>(read_int(t, "image_width", c.image_width));
  c.image_height = static_cast<int>(read_int(t, "image_height", c.image_height));
  c.horizontal_fov = read_double(t, "horizontal_fov", c.horizontal_fov);
  c.validate();
  return c;
}

void validate_task_camera(const TaskConfig& task, const CameraConfig& cam) {
  task.validate();
  cam.validate();
  // Worst case is a start offset along the shorter image axis.
  const double half_extent_px = std::min(cam.cx(), cam.cy());
  const double reach_px = cam.focal_px() * task.start_xy_radius / task.start_height;
  if (!(reach_px < half_extent_px))
    throw ConfigError("start_xy_radius " + format_double(task.start_xy_radius) +
                      " m puts the pad outside the initial camera view");
}

PadDetection project_pad(const VehicleState& state, const CameraConfig& cam,
                         double pad_radius, const PadDetection& previous,
                         const Eigen::Vector2d& pad_center) {
  const double h = state.position.z();
  if (!(h > 0.0)) throw GeometryError("pad projection at non-positive height");

  const double yaw = state.attitude.z();
  const Eigen::Vector2d d = pad_center - state.position.head<2>();
  const double d_right = std::cos(yaw) * d.x() + std::sin(yaw) * d.y();
  const double d_forward = -std::sin(yaw) * d.x() + std::cos(yaw) * d.y();
  const double f = cam.focal_px();

  PadDetection det;
  det.u = cam.cx() + f * d_right / h;
  det.v = cam.cy() + f * d_forward / h;
  det.radius_px = f * pad_radius / h;
  det.visible = h > kMinVisibleHeight && det.u >= 0.0 && det.u <= cam.image_width &&
                det.v >= 0.0 && det.v <= cam.image_height;
  if (det.visible) return det;

  PadDetection held = previous;
  held.visible = false;
  return held;
}

PadDetection initial_detection(const CameraConfig& cam) {
  return {cam.cx(), cam.cy(), 0.0, false};
}

PadTracker::PadTracker(CameraConfig cam, double pad_radius)
    : cam_(cam), pad_radius_(pad_radius), last_(initial_detection(cam)) {}

void PadTracker::reset() { last_ = initial_detection(cam_); }

const PadDetection& PadTracker::update(const VehicleState& state) {
  last_ = project_pad(state, cam_, pad_radius_, last_);
  return last_;
}

ObservationScales ObservationScales::from_config(const TaskConfig& task,
                                                 const CameraConfig& cam) {
  const double pi = std::numbers::pi;
  const double rate_scale = 2.0;
  const double xy = task.start_xy_radius > 0.0 ? task.start_xy_radius : 1.0;
  ObservationScales s;
  s.offset = {0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, cam.cx(), cam.cy(), 0};
  s.scale = {xy,
             xy,
             task.start_height,
             pi,
             pi,
             pi,
             task.max_lateral_speed,
             task.max_longitudinal_speed,
             task.max_heave_speed,
             rate_scale,
             rate_scale,
             rate_scale,
             cam.cx(),
             cam.cy(),
             cam.cy()};
  return s;
}

Observation ObservationScales::normalize(const Observation& raw) const {
  Observation out;
  for (std::size_t i = 0; i < kObservationDim; ++i)
    out[i] = (raw[i] - offset[i]) / scale[i];
  return out;
}

Observation ObservationScales::denormalize(const Observation& normalized) const {
  Observation out;
  for (std::size_t i = 0; i < kObservationDim; ++i)
    out[i] = normalized[i] * scale[i] + offset[i];
  return out;
}

Observation raw_observation(const VehicleState& s, const PadDetection& det) {
  return {s.position.x(),     s.position.y(),     s.position.z(),
          s.attitude.x(),     s.attitude.y(),     s.attitude.z(),
          s.velocity.x(),     s.velocity.y(),     s.velocity.z(),
          s.angular_rate.x(), s.angular_rate.y(), s.angular_rate.z(),
          det.u,              det.v,              det.radius_px};
}

Observation assemble_observation(const VehicleState& state, const PadDetection& det,
                                 const ObservationScales& scales) {
  Observation obs = scales.normalize(raw_observation(state, det));
  for (std::size_t i = 0; i < kObservationDim; ++i) {
    if (!std::isfinite(obs[i]))
      throw ObservationError("observation entry " + std::to_string(i) +
                             " is not finite at step " +
                             std::to_string(state.time_step));
  }
  return obs;
}

}  // namespace col
