#pragma once

#include <Eigen/Core>

#include "col/config.hpp"

namespace col {

// RMSProp over a flat parameter vector:
//   cache <- decay * cache + (1 - decay) * g^2
//   param <- param - lr * g / (sqrt(cache) + epsilon)
struct RmsProp {
  double learning_rate = 1e-4;
  double decay = 0.9;
  double epsilon = 1e-8;
  Eigen::VectorXd cache;  // lazily sized on first step

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
  void reset() { cache.resize(0); }

  ConfigTree to_tree() const;
  static RmsProp from_tree(const ConfigTree& tree);

  bool operator==(const RmsProp& other) const;
};

// Adam, used by the PPO baseline.
struct Adam {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long long t = 0;
  Eigen::VectorXd m;
  Eigen::VectorXd v;

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
};

}  // namespace col
