#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>

#include <Eigen/Core>

#include "col/config.hpp"
#include "col/sim.hpp"

namespace col {

inline constexpr std::size_t kObservationDim = 15;
inline constexpr std::size_t kActionDim = 4;

using Observation = std::array<double, kObservationDim>;

// Downward-looking pinhole camera rigidly attached to the body, rotating with
// yaw only. Image u grows toward body-right, v toward body-forward.
struct CameraConfig {
  int image_width = 320;
  int image_height = 240;
  double horizontal_fov = 1.5707963267948966;  // radians

  double focal_px() const;
  double cx() const { return image_width / 2.0; }
  double cy() const { return image_height / 2.0; }

  void validate() const;
  ConfigTree to_tree() const;
  static CameraConfig from_tree(const ConfigTree& tree);
};

// Fails when the start disc at start_height does not project fully inside
// the image, so every episode begins with the pad in view.
void validate_task_camera(const TaskConfig& task, const CameraConfig& cam);

struct PadDetection {
  double u = 0.0;
  double v = 0.0;
  double radius_px = 0.0;
  bool visible = false;
};

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ObservationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Minimum height at which the pad is still reported as visible.
inline constexpr double kMinVisibleHeight = 0.05;

// Projects the pad center; on loss of visibility returns `previous` with
// visible = false (zero-order hold).
PadDetection project_pad(const VehicleState& state, const CameraConfig& cam,
                         double pad_radius, const PadDetection& previous,
                         const Eigen::Vector2d& pad_center = Eigen::Vector2d::Zero());

// Detection reported before the first valid measurement of an episode.
PadDetection initial_detection(const CameraConfig& cam);

// Holds the last valid detection across steps of one episode.
class PadTracker {
 public:
  PadTracker(CameraConfig cam, double pad_radius);
  void reset();
  const PadDetection& update(const VehicleState& state);
  const PadDetection& last() const { return last_; }

 private:
  CameraConfig cam_;
  double pad_radius_;
  PadDetection last_;
};

// Per-dimension affine map x' = (x - offset) / scale.
struct ObservationScales {
  Observation offset{};
  Observation scale{};

  static ObservationScales from_config(const TaskConfig& task,
                                       const CameraConfig& cam);
  Observation normalize(const Observation& raw) const;
  Observation denormalize(const Observation& normalized) const;
};

// Raw order: position(3), attitude(3), velocity(3), angular rate(3),
// pad u, pad v, pad radius.
Observation raw_observation(const VehicleState& state, const PadDetection& det);

// Normalized policy input; throws ObservationError on non-finite entries.
Observation assemble_observation(const VehicleState& state, const PadDetection& det,
                                 const ObservationScales& scales);

}  // namespace col
