#include <cmath>

#include "doctest.h"
#include "col/perception.hpp"
#include "col/rng.hpp"
#include "oracles.hpp"

using namespace col;

namespace {
VehicleState at(double x, double y, double h, double yaw = 0) {
  VehicleState s;
  s.position = {x, y, h};
  s.attitude.z() = yaw;
  return s;
}
}  // namespace

TEST_CASE("camera defaults") {
  CameraConfig cam;
  CHECK(cam.focal_px() == doctest::Approx(160.0).epsilon(1e-12));
  CHECK(cam.cx() == 160.0);
  CHECK(cam.cy() == 120.0);
}

TEST_CASE("hand pinhole examples") {
  CameraConfig cam;
  const auto prev = initial_detection(cam);
  auto d = project_pad(at(0, 0, 8), cam, 0.5, prev);
  CHECK(d.u == doctest::Approx(160));
  CHECK(d.v == doctest::Approx(120));
  CHECK(d.radius_px == doctest::Approx(10));
  CHECK(d.visible);

  // Pad 1 m to the right of the vehicle.
  d = project_pad(at(-1, 0, 8), cam, 0.5, prev);
  CHECK(d.u == doctest::Approx(180));
  CHECK(d.v == doctest::Approx(120));
}

TEST_CASE("projection matches an independent pinhole computation") {
  CameraConfig cam;
  Rng rng = make_rng(11, 0);
  std::uniform_real_distribution<double> xy(-3, 3), h(0.2, 10), yaw(-M_PI, M_PI);
  for (int i = 0; i < 1000; ++i) {
    const auto s = at(xy(rng), xy(rng), h(rng), yaw(rng));
    const auto ref = testing::pinhole_reference(s.position, s.attitude.z(), 0.5);
    const auto d = project_pad(s, cam, 0.5, initial_detection(cam));
    if (!d.visible) continue;
    REQUIRE(std::abs(d.u - ref.u) < 1e-9);
    REQUIRE(std::abs(d.v - ref.v) < 1e-9);
    REQUIRE(std::abs(d.radius_px - ref.r) < 1e-9);
  }
}

TEST_CASE("back-projection recovers the pad offset") {
  CameraConfig cam;
  Rng rng = make_rng(12, 0);
  std::uniform_real_distribution<double> xy(-3, 3), h(0.5, 10), yaw(-M_PI, M_PI);
  for (int i = 0; i < 500; ++i) {
    const auto s = at(xy(rng), xy(rng), h(rng), yaw(rng));
    const auto d = project_pad(s, cam, 0.5, initial_detection(cam));
    if (!d.visible) continue;
    const double z = s.position.z(), psi = s.attitude.z();
    const double r = (d.u - 160) * z / 160, f = (d.v - 120) * z / 160;
    const Eigen::Vector2d world(std::cos(psi) * r - std::sin(psi) * f,
                                std::sin(psi) * r + std::cos(psi) * f);
    REQUIRE((world - (-s.position.head<2>())).norm() < 1e-9);
  }
}

TEST_CASE("yaw rotation rotates the pixel offset the other way") {
  CameraConfig cam;
  Rng rng = make_rng(13, 0);
  std::uniform_real_distribution<double> xy(-1.5, 1.5), yaw(-M_PI, M_PI);
  for (int i = 0; i < 500; ++i) {
    const auto s0 = at(xy(rng), xy(rng), 8.0, yaw(rng));
    const double alpha = yaw(rng);
    auto s1 = s0;
    s1.attitude.z() += alpha;
    const auto d0 = project_pad(s0, cam, 0.5, initial_detection(cam));
    const auto d1 = project_pad(s1, cam, 0.5, initial_detection(cam));
    REQUIRE((d0.visible && d1.visible));
    const Eigen::Vector2d o0(d0.u - 160, d0.v - 120), o1(d1.u - 160, d1.v - 120);
    const Eigen::Vector2d rotated = Eigen::Rotation2Dd(-alpha) * o0;
    REQUIRE((rotated - o1).norm() < 1e-9);
    REQUIRE(std::abs(d0.radius_px - d1.radius_px) < 1e-12);
  }
}

TEST_CASE("radius strictly decreases with height") {
  CameraConfig cam;
  double last = INFINITY;
  for (double h = 0.1; h < 12; h += 0.1) {
    const double r = project_pad(at(0, 0, h), cam, 0.5, initial_detection(cam)).radius_px;
    REQUIRE(r < last);
    last = r;
  }
}

TEST_CASE("lost visibility holds the previous detection") {
  CameraConfig cam;
  PadTracker tracker(cam, 0.5);
  const auto first = tracker.update(at(0.5, 0.0, 4.0));
  REQUIRE(first.visible);
  const auto lost = tracker.update(at(40.0, 0.0, 4.0));
  CHECK_FALSE(lost.visible);
  CHECK(lost.u == first.u);
  CHECK(lost.v == first.v);
  CHECK(lost.radius_px == first.radius_px);
  const auto low = tracker.update(at(0.0, 0.0, 0.01));
  CHECK_FALSE(low.visible);
  CHECK(low.u == first.u);
  CHECK_THROWS_AS(project_pad(at(0, 0, 0), cam, 0.5, first), GeometryError);
}

TEST_CASE("visible detections lie inside the image") {
  CameraConfig cam;
  Rng rng = make_rng(14, 0);
  std::uniform_real_distribution<double> xy(-8, 8), h(0.01, 10), yaw(-M_PI, M_PI);
  for (int i = 0; i < 2000; ++i) {
    const auto d = project_pad(at(xy(rng), xy(rng), h(rng), yaw(rng)), cam, 0.5,
                               initial_detection(cam));
    if (!d.visible) continue;
    REQUIRE((d.u >= 0 && d.u <= 320 && d.v >= 0 && d.v <= 240 && d.radius_px > 0));
  }
}

TEST_CASE("observation layout and scaling") {
  TaskConfig task;
  CameraConfig cam;
  const auto scales = ObservationScales::from_config(task, cam);
  const auto s = at(0, 0, task.start_height);
  const auto det = project_pad(s, cam, task.pad_radius, initial_detection(cam));
  const auto obs = assemble_observation(s, det, scales);
  CHECK(obs.size() == 15);
  CHECK(obs[2] == doctest::Approx(1.0));
  CHECK(obs[12] == doctest::Approx(0.0));
  CHECK(obs[13] == doctest::Approx(0.0));
  for (std::size_t i = 0; i < 12; ++i)
    if (i != 2) CHECK(obs[i] == 0.0);

  auto bad = s;
  bad.velocity.x() = NAN;
  CHECK_THROWS_AS(assemble_observation(bad, det, scales), ObservationError);
}

TEST_CASE("normalization is a per-dimension bijection") {
  const auto scales = ObservationScales::from_config({}, {});
  Rng rng = make_rng(15, 0);
  std::uniform_real_distribution<double> u(-300, 300);
  for (int i = 0; i < 1000; ++i) {
    Observation x;
    for (auto& e : x) e = u(rng);
    const auto back = scales.denormalize(scales.normalize(x));
    for (std::size_t k = 0; k < x.size(); ++k)
      REQUIRE(std::abs(back[k] - x[k]) <= 1e-12 * std::max(1.0, std::abs(x[k])));
  }
}

TEST_CASE("start disc must fit in the image") {
  TaskConfig task;
  CameraConfig cam;
  CHECK_NOTHROW(validate_task_camera(task, cam));
  task.start_xy_radius = 9.0;
  CHECK_THROWS(validate_task_camera(task, cam));
}
