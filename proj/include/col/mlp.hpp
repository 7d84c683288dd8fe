#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "col/rng.hpp"

namespace col {

enum class Activation : unsigned char { Relu = 0, Tanh = 1, Identity = 2 };

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Hidden sizes of the imitation policy.
inline const std::vector<int> kPolicyHidden = {130, 72, 40};

// Fully connected network. All weights and biases live in one flat vector so
// optimizers, checkpoints and finite-difference checks treat them uniformly.
// Batches are column-major: one sample per column.
class Mlp {
 public:
  using WeightMap = Eigen::Map<const Eigen::MatrixXd>;
  using BiasMap = Eigen::Map<const Eigen::VectorXd>;

  struct Cache {
    // inputs[l] feeds layer l; outputs.back() is the network output.
    std::vector<Eigen::MatrixXd> inputs;
    std::vector<Eigen::MatrixXd> outputs;
  };

  Mlp() = default;
  // sizes = {in, hidden..., out}; parameters start at zero.
  Mlp(std::vector<int> sizes, Activation hidden, Activation output);

  // 15 -> 130 -> 72 -> 40 -> 4, ReLU hidden, tanh output.
  static Mlp policy_network();

  // Weights ~ Normal(0, sqrt(2 / fan_in)), biases zero.
  void init_he_normal(Rng& rng);

  const std::vector<int>& sizes() const { return sizes_; }
  Activation hidden_activation() const { return hidden_; }
  Activation output_activation() const { return output_; }
  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  std::size_t layer_count() const { return sizes_.size() - 1; }
  std::size_t parameter_count() const { return static_cast<std::size_t>(params_.size()); }

  const Eigen::VectorXd& parameters() const { return params_; }
  Eigen::VectorXd& parameters() { return params_; }
  void set_parameters(const Eigen::VectorXd& p);

  WeightMap weight(std::size_t layer) const;
  BiasMap bias(std::size_t layer) const;
  Eigen::Map<Eigen::MatrixXd> weight(std::size_t layer);
  Eigen::Map<Eigen::VectorXd> bias(std::size_t layer);

  Eigen::MatrixXd forward(const Eigen::MatrixXd& batch) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& batch, Cache& cache) const;
  Eigen::VectorXd forward_one(const Eigen::VectorXd& input) const;

  // Reverse-mode pass: output_grad = dL/d(output), same shape as the output.
  // Returns dL/d(parameters) in the flat layout.
  Eigen::VectorXd backward(const Cache& cache, const Eigen::MatrixXd& output_grad) const;

  bool operator==(const Mlp& other) const;

 private:
  std::vector<int> sizes_;
  std::vector<std::size_t> offsets_;  // start of each layer's weights
  Activation hidden_ = Activation::Relu;
  Activation output_ = Activation::Identity;
  Eigen::VectorXd params_;
};

struct Minibatch {
  Eigen::MatrixXd observations;  // obs_dim x N
  Eigen::MatrixXd actions;       // act_dim x N

  Eigen::Index size() const { return observations.cols(); }
};

// Mean over all N * act_dim elements of the squared prediction error.
double mse_loss(const Mlp& net, const Minibatch& batch);

struct LossAndGradient {
  double loss = 0.0;
  Eigen::VectorXd gradient;
};

LossAndGradient mse_loss_and_gradient(const Mlp& net, const Minibatch& batch);

}  // namespace col
