#include "col/mlp.hpp"

#include <cmath>
#include <string>

#include "col/perception.hpp"

namespace col {

namespace {

void apply_activation(Activation act, Eigen::MatrixXd& z) {
  switch (act) {
    case Activation::Relu: z = z.cwiseMax(0.0); break;
    case Activation::Tanh: z = z.array().tanh().matrix(); break;
    case Activation::Identity: break;
  }
}

// Multiplies grad by the activation derivative expressed through the output.
void activation_backward(Activation act, const Eigen::MatrixXd& out,
                         Eigen::MatrixXd& grad) {
  switch (act) {
    case Activation::Relu:
      grad = (out.array() > 0.0).select(grad, 0.0);
      break;
    case Activation::Tanh:
      grad.array() *= 1.0 - out.array().square();
      break;
    case Activation::Identity: break;
  }
}

}  // namespace

Mlp::Mlp(std::vector<int> sizes, Activation hidden, Activation output)
    : sizes_(std::move(sizes)), hidden_(hidden), output_(output) {
  if (sizes_.size() < 2) throw std::invalid_argument("mlp needs at least 2 sizes");
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    if (sizes_[l] < 1 || sizes_[l + 1] < 1)
      throw std::invalid_argument("mlp layer sizes must be positive");
    offsets_.push_back(total);
    total += static_cast<std::size_t>(sizes_[l]) * sizes_[l + 1] + sizes_[l + 1];
  }
  params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(total));
}

Mlp Mlp::policy_network() {
  std::vector<int> sizes = {static_cast<int>(kObservationDim)};
  sizes.insert(sizes.end(), kPolicyHidden.begin(), kPolicyHidden.end());
  sizes.push_back(static_cast<int>(kActionDim));
  return Mlp(sizes, Activation::Relu, Activation::Tanh);
}

void Mlp::init_he_normal(Rng& rng) {
  params_.setZero();
  for (std::size_t l = 0; l < layer_count(); ++l) {
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / sizes_[l]));
    auto w = weight(l);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = normal(rng);
  }
}

void Mlp::set_parameters(const Eigen::VectorXd& p) {
  if (p.size() != params_.size())
    throw std::invalid_argument("parameter vector has wrong length");
  params_ = p;
}

Mlp::WeightMap Mlp::weight(std::size_t l) const {
  return WeightMap(params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]);
}

Mlp::BiasMap Mlp::bias(std::size_t l) const {
  return BiasMap(params_.data() + offsets_[l] +
                     static_cast<std::size_t>(sizes_[l]) * sizes_[l + 1],
                 sizes_[l + 1]);
}

Eigen::Map<Eigen::MatrixXd> Mlp::weight(std::size_t l) {
  return {params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]};
}

Eigen::Map<Eigen::VectorXd> Mlp::bias(std::size_t l) {
  return {params_.data() + offsets_[l] +
              static_cast<std::size_t>(sizes_[l]) * sizes_[l + 1],
          sizes_[l + 1]};
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& batch) const {
  Cache cache;
  return forward(batch, cache);
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& batch, Cache& cache) const {
  if (batch.rows() != input_dim())
    throw std::invalid_argument("input has " + std::to_string(batch.rows()) +
                                " rows, network expects " +
                                std::to_string(input_dim()));
  cache.inputs.assign(1, batch);
  cache.outputs.clear();
  for (std::size_t l = 0; l < layer_count(); ++l) {
    Eigen::MatrixXd z = weight(l) * cache.inputs.back();
    z.colwise() += bias(l);
    apply_activation(l + 1 == layer_count() ? output_ : hidden_, z);
    cache.outputs.push_back(z);
    if (l + 1 < layer_count()) cache.inputs.push_back(std::move(z));
  }
  if (!cache.outputs.back().allFinite())
    throw NumericError("non-finite network output");
  return cache.outputs.back();
}

Eigen::VectorXd Mlp::forward_one(const Eigen::VectorXd& input) const {
  return forward(Eigen::MatrixXd(input)).col(0);
}

Eigen::VectorXd Mlp::backward(const Cache& cache,
                              const Eigen::MatrixXd& output_grad) const {
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(params_.size());
  Eigen::MatrixXd delta = output_grad;
  for (std::size_t l = layer_count(); l-- > 0;) {
    activation_backward(l + 1 == layer_count() ? output_ : hidden_,
                        cache.outputs[l], delta);
    const Eigen::MatrixXd& in = cache.inputs[l];
    Eigen::Map<Eigen::MatrixXd> gw(grad.data() + offsets_[l], sizes_[l + 1], sizes_[l]);
    Eigen::Map<Eigen::VectorXd> gb(
        grad.data() + offsets_[l] + static_cast<std::size_t>(sizes_[l]) * sizes_[l + 1],
        sizes_[l + 1]);
    gw.noalias() = delta * in.transpose();
    gb = delta.rowwise().sum();
    if (l > 0) delta = weight(l).transpose() * delta;
  }
  return grad;
}

bool Mlp::operator==(const Mlp& other) const {
  return sizes_ == other.sizes_ && hidden_ == other.hidden_ &&
         output_ == other.output_ && params_.size() == other.params_.size() &&
         params_ == other.params_;
}

double mse_loss(const Mlp& net, const Minibatch& batch) {
  if (batch.size() < 1) throw std::invalid_argument("empty minibatch");
  const Eigen::MatrixXd pred = net.forward(batch.observations);
  return (pred - batch.actions).squaredNorm() / static_cast<double>(pred.size());
}

LossAndGradient mse_loss_and_gradient(const Mlp& net, const Minibatch& batch) {
  if (batch.size() < 1) throw std::invalid_argument("empty minibatch");
  Mlp::Cache cache;
  const Eigen::MatrixXd pred = net.forward(batch.observations, cache);
  const Eigen::MatrixXd err = pred - batch.actions;
  const double n = static_cast<double>(err.size());
  return {err.squaredNorm() / n, net.backward(cache, (2.0 / n) * err)};
}

}  // namespace col
