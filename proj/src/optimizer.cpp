#include "col/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace col {

void RmsProp::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  if (grad.size() != params.size())
    throw std::invalid_argument("rmsprop: gradient/parameter size mismatch");
  if (cache.size() == 0) cache = Eigen::VectorXd::Zero(params.size());
  if (cache.size() != params.size())
    throw std::invalid_argument("rmsprop: cache/parameter size mismatch");
  cache = decay * cache + (1.0 - decay) * grad.cwiseAbs2();
  params.array() -= learning_rate * grad.array() / (cache.array().sqrt() + epsilon);
}

ConfigTree RmsProp::to_tree() const {
  ConfigTree t;
  put_double(t, "learning_rate", learning_rate);
  put_double(t, "rmsprop_decay", decay);
  put_double(t, "rmsprop_epsilon", epsilon);
  return t;
}

RmsProp RmsProp::from_tree(const ConfigTree& t) {
  RmsProp o;
  o.learning_rate = read_double(t, "learning_rate", o.learning_rate);
  o.decay = read_double(t, "rmsprop_decay", o.decay);
  o.epsilon = read_double(t, "rmsprop_epsilon", o.epsilon);
  return o;
}

bool RmsProp::operator==(const RmsProp& o) const {
  return learning_rate == o.learning_rate && decay == o.decay &&
         epsilon == o.epsilon && cache.size() == o.cache.size() && cache == o.cache;
}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  if (grad.size() != params.size())
    throw std::invalid_argument("adam: gradient/parameter size mismatch");
  if (m.size() == 0) {
    m = Eigen::VectorXd::Zero(params.size());
    v = Eigen::VectorXd::Zero(params.size());
  }
  ++t;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  params.array() -=
      learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + epsilon);
}

}  // namespace col
