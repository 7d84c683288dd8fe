#include <cmath>

#include "doctest.h"
#include "col/ppo.hpp"
#include "col/rng.hpp"
#include "oracles.hpp"

using namespace col;

namespace {

RolloutStep step(double r, double v, bool terminal) {
  RolloutStep s;
  s.reward = r;
  s.value = v;
  s.terminal = terminal;
  return s;
}

// Buffer of one-step episodes sampled from the current policy at a fixed
// observation; `good` marks which pre-squash actions were rewarded.
RolloutBuffer bandit_buffer(const ActorCritic& ac, const Eigen::VectorXd& good,
                            const Eigen::VectorXd& bad, int n) {
  RolloutBuffer buf;
  Observation obs;
  obs.fill(0.2);
  const Eigen::VectorXd mu = ac.mean.forward_one(Eigen::Map<const Eigen::VectorXd>(obs.data(), 15));
  for (int i = 0; i < n; ++i) {
    RolloutStep s;
    s.observation = obs;
    s.pre_squash = i % 2 ? good : bad;
    s.log_prob = gaussian_log_prob(mu, ac.log_std, s.pre_squash);
    s.value = 0.0;
    s.reward = i % 2 ? 1.0 : 0.0;
    s.terminal = true;
    buf.steps.push_back(s);
  }
  return buf;
}

}  // namespace

TEST_CASE("action restriction") {
  const std::array<double, 2> two{0.1, -0.2};
  CHECK(restrict_action(two, ActionDims::Two) == ActionCommand{0.1, -0.2, 0.0, -0.4});
  const std::array<double, 3> three{0.3, 0.4, -0.9};
  const auto a3 = restrict_action(three, ActionDims::Three);
  CHECK(a3.yaw == 0.0);
  CHECK(a3 == ActionCommand{0.3, 0.4, 0.0, -0.9});
  const std::array<double, 4> four{0.5, -0.6, 0.7, -0.8};
  CHECK(restrict_action(four, ActionDims::Four) == ActionCommand{0.5, -0.6, 0.7, -0.8});
  CHECK_THROWS(restrict_action(four, ActionDims::Two));
  CHECK_THROWS(restrict_action(two, ActionDims::Three));
}

TEST_CASE("gae hand example") {
  RolloutBuffer buf;
  buf.steps = {step(0, 0.2, false), step(0, 0.3, false), step(1, 0.1, true)};
  const auto est = gae_advantages(buf, 0.99, 0.95);
  // delta2 = 0.9, delta1 = -0.201, delta0 = 0.097
  CHECK(std::abs(est.advantages[2] - 0.9) < 1e-12);
  CHECK(std::abs(est.advantages[1] - 0.64545) < 1e-12);
  CHECK(std::abs(est.advantages[0] - 0.704045725) < 1e-12);
  CHECK(std::abs(est.returns[0] - (0.704045725 + 0.2)) < 1e-12);
}

TEST_CASE("gae base cases and episode boundaries") {
  RolloutBuffer single;
  single.steps = {step(1, 0.35, true)};
  CHECK(gae_advantages(single, 0.99, 0.95).advantages[0] == doctest::Approx(0.65));

  RolloutBuffer buf;
  Rng rng = make_rng(2, 2);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> r, v;
  std::vector<bool> term;
  for (int i = 0; i < 40; ++i) {
    const bool t = (i % 9 == 8) || i == 39;
    buf.steps.push_back(step(t && u(rng) > 0.5 ? 1 : 0, u(rng), t));
    r.push_back(buf.steps.back().reward);
    v.push_back(buf.steps.back().value);
    term.push_back(t);
  }
  const auto zero = gae_advantages(buf, 0.0, 0.95);
  for (int i = 0; i < 40; ++i) REQUIRE(std::abs(zero.advantages[i] - (r[i] - v[i])) < 1e-15);

  const auto est = gae_advantages(buf, 0.97, 0.9);
  const auto ref = testing::gae_reference(r, v, term, 0.97, 0.9);
  for (int i = 0; i < 40; ++i) REQUIRE(std::abs(est.advantages[i] - ref[i]) < 1e-12);

  buf.steps.back().terminal = false;
  CHECK_THROWS_AS(gae_advantages(buf, 0.99, 0.95), std::invalid_argument);
}

TEST_CASE("advantage normalization") {
  Eigen::VectorXd a(5);
  a << 1, 2, 3, 4, 10;
  const auto n = normalize_advantages(a);
  CHECK(std::abs(n.mean()) < 1e-12);
  const double var = (n.array() - n.mean()).square().sum() / 5.0;
  CHECK(var == doctest::Approx(1.0).epsilon(1e-9));
  const auto flat = normalize_advantages(Eigen::VectorXd::Constant(4, 3.0));
  CHECK(flat.allFinite());
}

TEST_CASE("clip arithmetic") {
  CHECK(clipped_surrogate(1.5, 2.0, 0.2) == doctest::Approx(1.2 * 2.0));
  CHECK(clipped_surrogate(0.5, 2.0, 0.2) == doctest::Approx(0.5 * 2.0));
  CHECK(clipped_surrogate(0.5, -2.0, 0.2) == doctest::Approx(0.8 * -2.0));
  CHECK(clipped_surrogate(1.5, -2.0, 0.2) == doctest::Approx(1.5 * -2.0));
  Rng rng = make_rng(3, 3);
  std::uniform_real_distribution<double> ratio(0.01, 5), adv(-3, 3);
  for (int i = 0; i < 1000; ++i) {
    const double p = ratio(rng), a = adv(rng);
    REQUIRE(clipped_surrogate(p, a, 1e12) == p * a);
  }
}

TEST_CASE("gaussian log density") {
  Rng rng = make_rng(4, 4);
  std::uniform_real_distribution<double> u(-2, 2), ls(-1.5, 0.5);
  for (int i = 0; i < 200; ++i) {
    Eigen::VectorXd mu(3), log_std(3), x(3);
    for (int d = 0; d < 3; ++d) {
      mu[d] = u(rng);
      log_std[d] = ls(rng);
      x[d] = u(rng);
    }
    double density = 1.0;
    for (int d = 0; d < 3; ++d) {
      const double sd = std::exp(log_std[d]);
      density *= std::exp(-0.5 * std::pow((x[d] - mu[d]) / sd, 2)) / (sd * std::sqrt(2 * M_PI));
    }
    const double lp = gaussian_log_prob(mu, log_std, x);
    REQUIRE(std::abs(lp - std::log(density)) < 1e-8);

    // d/dx_0 by central differences against -(x - mu) / sd^2.
    const double h = 1e-6;
    Eigen::VectorXd up = x, down = x;
    up[0] += h;
    down[0] -= h;
    const double fd =
        (gaussian_log_prob(mu, log_std, up) - gaussian_log_prob(mu, log_std, down)) / (2 * h);
    REQUIRE(std::abs(fd + (x[0] - mu[0]) * std::exp(-2 * log_std[0])) < 1e-6);
  }
}

TEST_CASE("actor-critic construction") {
  Rng rng = make_rng(5, 5);
  const auto ac = ActorCritic::create(ActionDims::Three, -0.5, rng);
  CHECK(ac.mean.sizes() == std::vector<int>{15, 130, 72, 40, 3});
  CHECK(ac.value.sizes() == std::vector<int>{15, 130, 72, 40, 1});
  CHECK(ac.log_std == Eigen::VectorXd::Constant(3, -0.5));
  Observation obs;
  obs.fill(0.5);
  CHECK(ppo_greedy_action(ac, ActionDims::Three, obs).yaw == 0.0);
}

TEST_CASE("with ratios at one, clipping does not change the update") {
  PPOConfig cfg;
  cfg.epochs_per_update = 1;
  cfg.minibatch = 1000;
  Rng rng = make_rng(6, 6);
  const auto ac0 = ActorCritic::create(ActionDims::Four, -0.5, rng);
  Eigen::VectorXd good = Eigen::VectorXd::Constant(4, 0.3), bad = Eigen::VectorXd::Constant(4, -0.3);
  const auto buf = bandit_buffer(ac0, good, bad, 32);

  auto run = [&](double eps) {
    auto ac = ac0;
    Adam po, vo;
    Rng r = make_rng(7, 7);
    PPOConfig c = cfg;
    c.clip_epsilon = eps;
    const auto stats = ppo_update(ac, po, vo, buf, c, r);
    CHECK(stats.mean_ratio == doctest::Approx(1.0));
    return ac;
  };
  const auto clipped = run(0.2);
  const auto vanilla = run(1e12);
  CHECK(clipped.mean.parameters() == vanilla.mean.parameters());
  CHECK(clipped.log_std == vanilla.log_std);
}

TEST_CASE("rewarded action becomes more likely") {
  Rng rng = make_rng(8, 8);
  auto ac = ActorCritic::create(ActionDims::Two, -0.5, rng);
  Eigen::VectorXd good(2), bad(2);
  good << 0.4, -0.2;
  bad << -0.4, 0.2;
  Observation obs;
  obs.fill(0.2);
  auto logp = [&](const Eigen::VectorXd& a) {
    const auto mu = ac.mean.forward_one(Eigen::Map<const Eigen::VectorXd>(obs.data(), 15));
    return gaussian_log_prob(mu, ac.log_std, a);
  };
  const double before_good = logp(good), before_bad = logp(bad);
  const auto buf = bandit_buffer(ac, good, bad, 64);
  Adam po, vo;
  Rng r = make_rng(9, 9);
  PPOConfig cfg;
  const auto stats = ppo_update(ac, po, vo, buf, cfg, r);
  CHECK_FALSE(stats.aborted);
  CHECK(logp(good) > before_good);
  CHECK(logp(bad) < before_bad);
}

TEST_CASE("rollouts carry a sparse terminal reward") {
  Rng init = make_rng(10, 10);
  const auto ac = ActorCritic::create(ActionDims::Two, -0.5, init);
  Rng noise = make_rng(10, 11);
  for (std::uint64_t e = 0; e < 10; ++e) {
    RolloutBuffer buf;
    Rng start = make_rng(10, e);
    const auto status = collect_episode(ac, ActionDims::Two, TaskConfig{}, CameraConfig{}, start,
                                        noise, buf);
    REQUIRE(buf.complete());
    REQUIRE(buf.steps.size() <= 500);
    double total = 0;
    for (std::size_t i = 0; i < buf.steps.size(); ++i) {
      const auto& s = buf.steps[i];
      REQUIRE((s.reward == 0.0 || s.reward == 1.0));
      if (i + 1 < buf.steps.size()) REQUIRE((!s.terminal && s.reward == 0.0));
      total += s.reward;
    }
    CHECK(total == (status.success() ? 1.0 : 0.0));
  }
}

TEST_CASE("short training run produces a consistent rolling curve") {
  PPOConfig cfg;
  cfg.action_dims = ActionDims::Two;
  cfg.total_episodes = 25;
  cfg.rolling_window = 10;
  cfg.seed = 1;
  const auto a = train_ppo(cfg, TaskConfig{}, CameraConfig{});
  REQUIRE(a.curve.size() == 25);
  for (std::size_t i = 0; i < a.curve.size(); ++i) {
    const std::size_t lo = i + 1 > 10 ? i + 1 - 10 : 0;
    double hits = 0;
    for (std::size_t j = lo; j <= i; ++j) hits += a.curve[j].success;
    REQUIRE(a.curve[i].episode == static_cast<int>(i + 1));
    REQUIRE(a.curve[i].rolling_success == doctest::Approx(hits / double(i + 1 - lo)));
  }
  const auto b = train_ppo(cfg, TaskConfig{}, CameraConfig{});
  CHECK(a.final_policy.mean.parameters() == b.final_policy.mean.parameters());
}

TEST_CASE("random agent") {
  Rng a = make_rng(11, 0), b = make_rng(11, 0);
  for (int i = 0; i < 100; ++i) REQUIRE(random_agent_action(a) == random_agent_action(b));
  Rng rng = make_rng(12, 0);
  std::array<double, 4> mean{};
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto x = random_agent_action(rng).to_array();
    for (int d = 0; d < 4; ++d) {
      REQUIRE((x[d] >= -1.0 && x[d] <= 1.0));
      mean[d] += x[d] / n;
    }
  }
  for (double m : mean) CHECK(std::abs(m) < 0.05);
}

TEST_CASE("ppo config round-trip") {
  PPOConfig cfg;
  cfg.action_dims = ActionDims::Three;
  cfg.total_episodes = 300;
  const auto back = PPOConfig::from_tree(cfg.to_tree());
  CHECK(back.action_dims == ActionDims::Three);
  CHECK(back.total_episodes == 300);
  CHECK(back.gamma == 0.99);
  CHECK(back.gae_lambda == 0.95);
  CHECK(back.clip_epsilon == 0.2);
  PPOConfig bad;
  bad.total_episodes = 0;
  CHECK_THROWS(bad.validate());
}
