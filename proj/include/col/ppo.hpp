#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "col/config.hpp"
#include "col/mlp.hpp"
#include "col/optimizer.hpp"
#include "col/perception.hpp"
#include "col/rng.hpp"
#include "col/sim.hpp"

namespace col {

// Number of stick axes the PPO agent controls. The rest are held constant.
enum class ActionDims { Two = 2, Three = 3, Four = 4 };

std::string_view to_string(ActionDims dims);
ActionDims parse_action_dims(std::string_view text);

// Throttle stick used when the agent does not control throttle; a steady
// 0.6 m/s descent with the default heave limit.
inline constexpr double kConstantDescentStick = -0.4;

struct PPOConfig {
  ActionDims action_dims = ActionDims::Four;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_epsilon = 0.2;
  int epochs_per_update = 10;
  int minibatch = 64;
  int rollout_episodes_per_update = 10;
  double learning_rate = 3e-4;
  double entropy_coef = 0.0;
  double value_coef = 0.5;
  double initial_log_std = -0.5;
  int total_episodes = 1000;
  int rolling_window = 100;
  std::uint64_t seed = 0;

  void validate() const;
  ConfigTree to_tree() const;
  static PPOConfig from_tree(const ConfigTree& tree);
};

// Maps the agent's partial action onto a full stick command.
//   Two:   (roll, pitch)            -> (roll, pitch, 0, -0.4)
//   Three: (roll, pitch, throttle)  -> (roll, pitch, 0, throttle)
//   Four:  identity
ActionCommand restrict_action(std::span<const double> partial, ActionDims dims);

struct RolloutStep {
  Observation observation{};
  Eigen::VectorXd pre_squash;  // Gaussian sample before tanh
  double log_prob = 0.0;
  double value = 0.0;
  double reward = 0.0;
  bool terminal = false;
};

// Consecutive steps of complete episodes; rewards are 1 only on the
// terminal step of a successful landing.
struct RolloutBuffer {
  std::vector<RolloutStep> steps;

  bool complete() const { return !steps.empty() && steps.back().terminal; }
};

struct AdvantageEstimate {
  Eigen::VectorXd advantages;  // raw, not normalized
  Eigen::VectorXd returns;     // advantages + values
};

// Generalized advantage estimation. Throws std::invalid_argument when the
// buffer ends mid-episode.
AdvantageEstimate gae_advantages(const RolloutBuffer& buffer, double gamma, double lambda);

// Zero mean, unit variance, with the std floored by 1e-8.
Eigen::VectorXd normalize_advantages(const Eigen::VectorXd& advantages);

// Diagonal Gaussian log-density.
double gaussian_log_prob(const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std,
                         const Eigen::VectorXd& x);

// min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A)
double clipped_surrogate(double ratio, double advantage, double epsilon);

// Gaussian policy with an MLP mean and a state-independent log-std, plus a
// separate value network. Samples are squashed by tanh before restriction.
struct ActorCritic {
  Mlp mean;
  Eigen::VectorXd log_std;
  Mlp value;

  static ActorCritic create(ActionDims dims, double initial_log_std, Rng& rng);
  int action_dim() const { return mean.output_dim(); }
};

struct PpoUpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double mean_ratio = 1.0;
  bool aborted = false;
};

// Clipped-surrogate update over `epochs_per_update` shuffled passes.
// On a non-finite loss the parameters are restored and `aborted` is set.
PpoUpdateStats ppo_update(ActorCritic& ac, Adam& policy_opt, Adam& value_opt,
                          const RolloutBuffer& buffer, const PPOConfig& cfg, Rng& rng);

struct PpoCurvePoint {
  int episode = 0;  // 1-based
  bool success = false;
  double rolling_success = 0.0;
};

struct PpoRunResult {
  std::vector<PpoCurvePoint> curve;
  ActorCritic final_policy;
  int aborted_updates = 0;
  double final_rolling_success() const {
    return curve.empty() ? 0.0 : curve.back().rolling_success;
  }
};

// Appends one stochastic episode from `start_rng`'s start pose and returns
// its final status.
EpisodeStatus collect_episode(const ActorCritic& ac, ActionDims dims, const TaskConfig& task,
                              const CameraConfig& cam, Rng& start_rng, Rng& noise_rng,
                              RolloutBuffer& buffer);

// Trains from scratch for cfg.total_episodes episodes with the sparse
// terminal reward.
PpoRunResult train_ppo(const PPOConfig& cfg, const TaskConfig& task, const CameraConfig& cam,
                       const std::function<void(const PpoCurvePoint&)>& progress = {});

// Deterministic action: tanh of the mean, restricted.
ActionCommand ppo_greedy_action(const ActorCritic& ac, ActionDims dims, const Observation& obs);

// Uniform on [-1, 1]^4.
ActionCommand random_agent_action(Rng& rng);

}  // namespace col
