#pragma once

// Reference computations written independently of the library code paths.

#include <cmath>
#include <vector>

#include <Eigen/Geometry>

#include "col/mlp.hpp"
#include "col/sim.hpp"

namespace col::testing {

struct PixelRef {
  double u, v, r;
};

// Pinhole camera looking straight down, rotated with yaw: express the pad in
// the camera frame through a rotation matrix and divide by depth.
inline PixelRef pinhole_reference(const Eigen::Vector3d& position, double yaw, double pad_radius,
                                  double width = 320, double height = 240,
                                  double hfov = M_PI / 2) {
  const double f = (width / 2) / std::tan(hfov / 2);
  const Eigen::Matrix3d body_to_world = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).matrix();
  const Eigen::Vector3d rel = body_to_world.transpose() * (Eigen::Vector3d(0, 0, 0) - position);
  const double depth = -rel.z();
  return {width / 2 + f * rel.x() / depth, height / 2 + f * rel.y() / depth,
          f * pad_radius / depth};
}

// Analytic first-order step response from rest.
inline double lag_response(double target, double t, double tau) {
  return target * (1.0 - std::exp(-t / tau));
}

// Central finite differences of the per-element MSE, computed with a naive
// per-sample forward pass.
inline double naive_mse(const Mlp& net, const Minibatch& batch) {
  double sum = 0;
  for (Eigen::Index c = 0; c < batch.size(); ++c) {
    Eigen::VectorXd a = batch.observations.col(c);
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
      Eigen::VectorXd z = net.weight(l) * a + net.bias(l);
      const bool last = l + 1 == net.layer_count();
      const Activation act = last ? net.output_activation() : net.hidden_activation();
      for (Eigen::Index i = 0; i < z.size(); ++i) {
        if (act == Activation::Relu) z[i] = z[i] > 0 ? z[i] : 0;
        if (act == Activation::Tanh) z[i] = std::tanh(z[i]);
      }
      a = z;
    }
    sum += (a - batch.actions.col(c)).squaredNorm();
  }
  return sum / static_cast<double>(batch.size() * batch.actions.rows());
}

inline Eigen::VectorXd finite_difference_gradient(Mlp net, const Minibatch& batch,
                                                  double h = 1e-6) {
  Eigen::VectorXd g(net.parameter_count());
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    const double keep = net.parameters()[i];
    net.parameters()[i] = keep + h;
    const double up = naive_mse(net, batch);
    net.parameters()[i] = keep - h;
    const double down = naive_mse(net, batch);
    net.parameters()[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

// Relative error with an absolute floor so near-zero entries compare sanely.
inline double relative_error(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Backward GAE recursion written out step by step.
inline std::vector<double> gae_reference(const std::vector<double>& r,
                                         const std::vector<double>& v,
                                         const std::vector<bool>& terminal, double gamma,
                                         double lambda) {
  const std::size_t n = r.size();
  std::vector<double> adv(n, 0.0);
  double next_adv = 0, next_value = 0;
  for (std::size_t k = n; k-- > 0;) {
    if (terminal[k]) {
      next_adv = 0;
      next_value = 0;
    }
    const double delta = r[k] + gamma * next_value - v[k];
    adv[k] = delta + gamma * lambda * next_adv;
    next_adv = adv[k];
    next_value = v[k];
  }
  return adv;
}

}  // namespace col::testing
