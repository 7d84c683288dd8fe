#include "col/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <numeric>
#include <string>

namespace col {

std::string_view to_string(ActionDims dims) {
  switch (dims) {
    case ActionDims::Two: return "2";
    case ActionDims::Three: return "3";
    case ActionDims::Four: return "4";
  }
  return "?";
}

ActionDims parse_action_dims(std::string_view text) {
  if (text == "2" || text == "Two") return ActionDims::Two;
  if (text == "3" || text == "Three") return ActionDims::Three;
  if (text == "4" || text == "Four") return ActionDims::Four;
  throw ConfigError("action_dims must be 2, 3 or 4, got '" + std::string(text) + "'");
}

void PPOConfig::validate() const {
  for (double v : {gamma, gae_lambda, clip_epsilon, learning_rate, entropy_coef, value_coef,
                   initial_log_std}) {
    if (!std::isfinite(v)) throw ConfigError("ppo config: coefficients must be finite");
  }
  if (total_episodes < 1) throw ConfigError("ppo config: total_episodes must be >= 1");
  if (epochs_per_update < 1 || minibatch < 1 || rollout_episodes_per_update < 1 ||
      rolling_window < 1)
    throw ConfigError("ppo config: counts must be >= 1");
}

ConfigTree PPOConfig::to_tree() const {
  ConfigTree t;
  t.put("action_dims", std::string(to_string(action_dims)));
  put_double(t, "gamma", gamma);
  put_double(t, "gae_lambda", gae_lambda);
  put_double(t, "clip_epsilon", clip_epsilon);
  t.put("epochs_per_update", epochs_per_update);
  t.put("minibatch", minibatch);
  t.put("rollout_episodes_per_update", rollout_episodes_per_update);
  put_double(t, "learning_rate", learning_rate);
  put_double(t, "entropy_coef", entropy_coef);
  put_double(t, "value_coef", value_coef);
  put_double(t, "initial_log_std", initial_log_std);
  t.put("total_episodes", total_episodes);
  t.put("rolling_window", rolling_window);
  t.put("seed", seed);
  return t;
}

PPOConfig PPOConfig::from_tree(const ConfigTree& t) {
  PPOConfig c;
  c.action_dims = parse_action_dims(read_string(t, "action_dims", "4"));
  c.gamma = read_double(t, "gamma", c.gamma);
  c.gae_lambda = read_double(t, "gae_lambda", c.gae_lambda);
  c.clip_epsilon = read_double(t, "clip_epsilon", c.clip_epsilon);
  c.epochs_per_update = static_cast<int>(read_int(t, "epochs_per_update", c.epochs_per_update));
  c.minibatch = static_cast<int>(read_int(t, "minibatch", c.minibatch));
  c.rollout_episodes_per_update = static_cast<int>(
      read_int(t, "rollout_episodes_per_update", c.rollout_episodes_per_update));
  c.learning_rate = read_double(t, "learning_rate", c.learning_rate);
  c.entropy_coef = read_double(t, "entropy_coef", c.entropy_coef);
  c.value_coef = read_double(t, "value_coef", c.value_coef);
  c.initial_log_std = read_double(t, "initial_log_std", c.initial_log_std);
  c.total_episodes = static_cast<int>(read_int(t, "total_episodes", c.total_episodes));
  c.rolling_window = static_cast<int>(read_int(t, "rolling_window", c.rolling_window));
  c.seed = read_uint(t, "seed", c.seed);
  c.validate();
  return c;
}

ActionCommand restrict_action(std::span<const double> partial, ActionDims dims) {
  const auto n = static_cast<std::size_t>(dims);
  if (partial.size() != n)
    throw std::invalid_argument("restrict_action: expected " + std::to_string(n) +
                                " components, got " + std::to_string(partial.size()));
  switch (dims) {
    case ActionDims::Two: return {partial[0], partial[1], 0.0, kConstantDescentStick};
    case ActionDims::Three: return {partial[0], partial[1], 0.0, partial[2]};
    case ActionDims::Four: return {partial[0], partial[1], partial[2], partial[3]};
  }
  return {};
}

AdvantageEstimate gae_advantages(const RolloutBuffer& buffer, double gamma, double lambda) {
  if (!buffer.complete())
    throw std::invalid_argument("gae_advantages: buffer ends mid-episode");
  const auto n = static_cast<Eigen::Index>(buffer.steps.size());
  AdvantageEstimate est{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
  double next_adv = 0.0;
  double next_value = 0.0;
  for (Eigen::Index t = n - 1; t >= 0; --t) {
    const RolloutStep& s = buffer.steps[static_cast<std::size_t>(t)];
    const double live = s.terminal ? 0.0 : 1.0;
    const double delta = s.reward + gamma * next_value * live - s.value;
    const double adv = delta + gamma * lambda * next_adv * live;
    est.advantages[t] = adv;
    est.returns[t] = adv + s.value;
    next_adv = adv;
    next_value = s.value;
  }
  return est;
}

Eigen::VectorXd normalize_advantages(const Eigen::VectorXd& a) {
  if (a.size() == 0) return a;
  const double mean = a.mean();
  const double var = (a.array() - mean).square().mean();
  return (a.array() - mean) / std::max(std::sqrt(var), 1e-8);
}

double gaussian_log_prob(const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std,
                         const Eigen::VectorXd& x) {
  const Eigen::ArrayXd z = (x - mean).array() / log_std.array().exp();
  return -0.5 * z.square().sum() - log_std.sum() -
         0.5 * static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi);
}

double clipped_surrogate(double ratio, double advantage, double epsilon) {
  const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

ActorCritic ActorCritic::create(ActionDims dims, double initial_log_std, Rng& rng) {
  const int k = static_cast<int>(dims);
  std::vector<int> sizes = {static_cast<int>(kObservationDim)};
  sizes.insert(sizes.end(), kPolicyHidden.begin(), kPolicyHidden.end());
  std::vector<int> value_sizes = sizes;
  sizes.push_back(k);
  value_sizes.push_back(1);

  ActorCritic ac{Mlp(sizes, Activation::Relu, Activation::Identity),
                 Eigen::VectorXd::Constant(k, initial_log_std),
                 Mlp(value_sizes, Activation::Relu, Activation::Identity)};
  ac.mean.init_he_normal(rng);
  ac.value.init_he_normal(rng);
  // Small output layer so the initial mean action is near zero.
  ac.mean.weight(ac.mean.layer_count() - 1) *= 0.01;
  return ac;
}

namespace {

Eigen::MatrixXd observation_matrix(const RolloutBuffer& buf, std::span<const std::size_t> idx) {
  Eigen::MatrixXd m(kObservationDim, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j)
    for (std::size_t i = 0; i < kObservationDim; ++i)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          buf.steps[idx[j]].observation[i];
  return m;
}

}  // namespace

PpoUpdateStats ppo_update(ActorCritic& ac, Adam& policy_opt, Adam& value_opt,
                          const RolloutBuffer& buffer, const PPOConfig& cfg, Rng& rng) {
  const AdvantageEstimate est = gae_advantages(buffer, cfg.gamma, cfg.gae_lambda);
  const Eigen::VectorXd adv = normalize_advantages(est.advantages);
  const ActorCritic backup = ac;
  const int k = ac.action_dim();
  const auto mean_size = static_cast<Eigen::Index>(ac.mean.parameter_count());

  std::vector<std::size_t> order(buffer.steps.size());
  std::iota(order.begin(), order.end(), 0);
  PpoUpdateStats stats;
  double ratio_sum = 0.0;
  std::size_t ratio_count = 0;

  for (int epoch = 0; epoch < cfg.epochs_per_update; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.minibatch) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.minibatch));
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const auto b = static_cast<double>(idx.size());
      const Eigen::MatrixXd obs = observation_matrix(buffer, idx);

      Mlp::Cache mean_cache;
      Mlp::Cache value_cache;
      Eigen::MatrixXd means;
      Eigen::MatrixXd values;
      try {
        means = ac.mean.forward(obs, mean_cache);
        values = ac.value.forward(obs, value_cache);
      } catch (const NumericError&) {
        ac = backup;
        stats.aborted = true;
        return stats;
      }
      const Eigen::ArrayXd inv_var = (-2.0 * ac.log_std.array()).exp();

      Eigen::MatrixXd d_mean = Eigen::MatrixXd::Zero(k, static_cast<Eigen::Index>(idx.size()));
      Eigen::VectorXd d_log_std = Eigen::VectorXd::Zero(k);
      Eigen::MatrixXd d_value(1, static_cast<Eigen::Index>(idx.size()));
      double policy_loss = 0.0;
      double value_loss = 0.0;

      for (std::size_t j = 0; j < idx.size(); ++j) {
        const RolloutStep& s = buffer.steps[idx[j]];
        const auto col = static_cast<Eigen::Index>(j);
        const double a = adv[static_cast<Eigen::Index>(idx[j])];
        const double ret = est.returns[static_cast<Eigen::Index>(idx[j])];
        const Eigen::VectorXd mu = means.col(col);
        const double logp = gaussian_log_prob(mu, ac.log_std, s.pre_squash);
        const double ratio = std::exp(logp - s.log_prob);
        ratio_sum += ratio;
        ++ratio_count;
        policy_loss -= clipped_surrogate(ratio, a, cfg.clip_epsilon) / b;

        // Gradient flows only through the unclipped branch when it is the min.
        const bool unclipped_active =
            ratio * a <= std::clamp(ratio, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon) * a;
        const bool inside = ratio >= 1.0 - cfg.clip_epsilon && ratio <= 1.0 + cfg.clip_epsilon;
        if (unclipped_active || inside) {
          const double coef = -a * ratio / b;  // d(-surrogate)/d(logp)
          const Eigen::ArrayXd diff = (s.pre_squash - mu).array();
          d_mean.col(col) = coef * (diff * inv_var).matrix();
          d_log_std.array() += coef * (diff.square() * inv_var - 1.0);
        }
        const double verr = values(0, col) - ret;
        value_loss += cfg.value_coef * verr * verr / b;
        d_value(0, col) = 2.0 * cfg.value_coef * verr / b;
      }
      // Entropy of a diagonal Gaussian: sum(log_std) + const.
      policy_loss -= cfg.entropy_coef * ac.log_std.sum();
      d_log_std.array() -= cfg.entropy_coef;

      if (!std::isfinite(policy_loss) || !std::isfinite(value_loss)) {
        ac = backup;
        stats.aborted = true;
        return stats;
      }
      stats.policy_loss = policy_loss;
      stats.value_loss = value_loss;

      Eigen::VectorXd policy_params(mean_size + k);
      policy_params << ac.mean.parameters(), ac.log_std;
      Eigen::VectorXd policy_grad(mean_size + k);
      policy_grad << ac.mean.backward(mean_cache, d_mean), d_log_std;
      policy_opt.step(policy_params, policy_grad);
      ac.mean.parameters() = policy_params.head(mean_size);
      ac.log_std = policy_params.tail(k);

      value_opt.step(ac.value.parameters(), ac.value.backward(value_cache, d_value));
    }
  }
  stats.mean_ratio = ratio_count ? ratio_sum / static_cast<double>(ratio_count) : 1.0;
  return stats;
}

ActionCommand ppo_greedy_action(const ActorCritic& ac, ActionDims dims, const Observation& obs) {
  const Eigen::VectorXd mu =
      ac.mean.forward_one(Eigen::Map<const Eigen::VectorXd>(obs.data(), obs.size()));
  const Eigen::VectorXd a = mu.array().tanh();
  return restrict_action(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())), dims);
}

EpisodeStatus collect_episode(const ActorCritic& ac, ActionDims dims, const TaskConfig& task,
                              const CameraConfig& cam, Rng& start_rng, Rng& noise_rng,
                              RolloutBuffer& buffer) {
  const ObservationScales scales = ObservationScales::from_config(task, cam);
  const int k = ac.action_dim();
  std::normal_distribution<double> normal(0.0, 1.0);
  Simulator sim(task);
  PadTracker tracker(cam, task.pad_radius);
  sim.reset(start_rng);
  while (!sim.status().done()) {
    RolloutStep step;
    step.observation = assemble_observation(sim.state(), tracker.update(sim.state()), scales);
    const Eigen::Map<const Eigen::VectorXd> x(step.observation.data(), step.observation.size());
    const Eigen::VectorXd mu = ac.mean.forward_one(x);
    step.value = ac.value.forward_one(x)[0];
    step.pre_squash.resize(k);
    for (int d = 0; d < k; ++d)
      step.pre_squash[d] = mu[d] + std::exp(ac.log_std[d]) * normal(noise_rng);
    step.log_prob = gaussian_log_prob(mu, ac.log_std, step.pre_squash);
    const Eigen::VectorXd squashed = step.pre_squash.array().tanh();
    const auto& status = sim.step(
        restrict_action(std::span<const double>(squashed.data(), static_cast<std::size_t>(k)), dims));
    step.terminal = status.done();
    step.reward = status.success() ? 1.0 : 0.0;
    buffer.steps.push_back(std::move(step));
  }
  return sim.status();
}

PpoRunResult train_ppo(const PPOConfig& cfg, const TaskConfig& task, const CameraConfig& cam,
                       const std::function<void(const PpoCurvePoint&)>& progress) {
  cfg.validate();
  validate_task_camera(task, cam);
  Rng init_rng = make_rng(cfg.seed, 0x70706f00);
  Rng noise_rng = make_rng(cfg.seed, 0x70706f01);
  Rng shuffle_rng = make_rng(cfg.seed, 0x70706f02);
  PpoRunResult result{{}, ActorCritic::create(cfg.action_dims, cfg.initial_log_std, init_rng), 0};
  ActorCritic& ac = result.final_policy;
  Adam policy_opt;
  Adam value_opt;
  policy_opt.learning_rate = cfg.learning_rate;
  value_opt.learning_rate = cfg.learning_rate;

  std::deque<bool> window;
  int successes_in_window = 0;
  int episode = 0;

  while (episode < cfg.total_episodes) {
    RolloutBuffer buffer;
    const int batch_episodes =
        std::min(cfg.rollout_episodes_per_update, cfg.total_episodes - episode);
    for (int i = 0; i < batch_episodes; ++i, ++episode) {
      Rng start_rng = make_rng(cfg.seed, 0x70700000ULL + static_cast<std::uint64_t>(episode));
      const bool success =
          collect_episode(ac, cfg.action_dims, task, cam, start_rng, noise_rng, buffer).success();
      window.push_back(success);
      successes_in_window += success;
      if (static_cast<int>(window.size()) > cfg.rolling_window) {
        successes_in_window -= window.front();
        window.pop_front();
      }
      PpoCurvePoint point{episode + 1, success,
                          static_cast<double>(successes_in_window) / static_cast<double>(window.size())};
      result.curve.push_back(point);
      if (progress) progress(point);
    }
    if (ppo_update(ac, policy_opt, value_opt, buffer, cfg, shuffle_rng).aborted)
      ++result.aborted_updates;
  }
  return result;
}

ActionCommand random_agent_action(Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ActionCommand a;
  a.roll = u(rng);
  a.pitch = u(rng);
  a.yaw = u(rng);
  a.throttle = u(rng);
  return a;
}

}  // namespace col
