#include <atomic>
#include <numeric>
#include <thread>

#include "doctest.h"
#include "col/rng.hpp"
#include "col/trainer.hpp"

using namespace col;

namespace {

Mlp seeded_policy(std::uint64_t seed) {
  auto net = Mlp::policy_network();
  Rng rng = make_rng(seed, 0x696e6974);
  net.init_he_normal(rng);
  return net;
}

HumanSample sample_with(const std::array<double, 4>& action, double obs = 0.3) {
  HumanSample s;
  s.observation.fill(obs);
  s.action = action;
  return s;
}

}  // namespace

TEST_CASE("no new samples means no updates") {
  HumanDataset ds;
  const auto init = seeded_policy(1);
  PolicyTrainer trainer(ds, init, TrainerConfig{});
  CHECK(trainer.idle());
  CHECK(trainer.advance(1000) == 0);
  CHECK(trainer.latest()->policy == init);
  CHECK(trainer.latest()->version == 0);
  CHECK(trainer.status().total_epochs == 0);
}

TEST_CASE("one fixed sample converges well before the epoch cap") {
  HumanDataset ds;
  ds.append(sample_with({0.5, -0.3, 0.1, -0.4}));
  PolicyTrainer trainer(ds, seeded_policy(2), TrainerConfig{});
  CHECK_FALSE(trainer.idle());
  trainer.drain();
  const auto st = trainer.status();
  CHECK(st.last_loss <= 0.005);
  CHECK(st.epochs_run_last_burst < 2000);
  CHECK(st.watermark == 1);
  CHECK(trainer.latest()->version == 1);
  CHECK(trainer.idle());
}

TEST_CASE("contradictory samples run the full burst and settle at the variance") {
  HumanDataset ds;
  for (int i = 0; i < 8; ++i) {
    const double a = (i % 2 ? 0.5 : -0.5);
    ds.append(sample_with({a, a, a, a}));
  }
  PolicyTrainer trainer(ds, seeded_policy(3), TrainerConfig{});
  trainer.drain();
  const auto st = trainer.status();
  CHECK(st.epochs_run_last_burst == 2000);
  CHECK(st.last_loss == doctest::Approx(0.25).epsilon(0.1));

  // The prediction sits at the target mean.
  const auto out = trainer.latest()->policy.forward_one(Eigen::VectorXd::Constant(15, 0.3));
  CHECK(out.cwiseAbs().maxCoeff() < 0.1);
}

TEST_CASE("advance respects its epoch budget and the watermark only grows") {
  HumanDataset ds;
  PolicyTrainer trainer(ds, seeded_policy(4), TrainerConfig{});
  std::size_t last_mark = 0;
  Rng rng = make_rng(4, 4);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 40; ++i) {
    ds.append(sample_with({u(rng), u(rng), u(rng), u(rng)}, u(rng)));
    CHECK(trainer.advance(20) <= 20);
    const auto mark = trainer.status().watermark;
    REQUIRE(mark >= last_mark);
    REQUIRE(mark <= ds.size());
    last_mark = mark;
  }
  trainer.drain();
  CHECK(trainer.status().watermark == ds.size());
}

TEST_CASE("divergence halts the trainer and keeps the last snapshot") {
  HumanDataset ds;
  ds.append(sample_with({0.5, 0.5, 0.5, 0.5}));
  TrainerConfig cfg;
  cfg.optimizer.learning_rate = 1e300;
  Mlp net({15, 4, 4}, Activation::Relu, Activation::Identity);
  Rng rng = make_rng(5, 5);
  net.init_he_normal(rng);
  PolicyTrainer trainer(ds, net, cfg);
  trainer.drain();
  CHECK(trainer.status().halted);
  CHECK(trainer.latest()->policy == net);
  CHECK(trainer.idle());
  CHECK(trainer.advance(10) == 0);
}

TEST_CASE("snapshots are never torn") {
  Mlp base({15, 130, 72, 40, 4}, Activation::Relu, Activation::Tanh);
  SnapshotChannel channel(std::make_shared<const PolicySnapshot>(PolicySnapshot{base, 0, 0, 0}));
  std::atomic<bool> done{false};
  std::atomic<int> torn{0}, regressions{0};
  std::vector<std::thread> readers;
  for (int r = 0; r < 3; ++r)
    readers.emplace_back([&] {
      std::uint64_t last = 0;
      while (!done) {
        const auto snap = channel.latest();
        const auto& p = snap->policy.parameters();
        // Every parameter carries the version, and the loss holds the sum.
        const double expected = static_cast<double>(snap->version);
        if ((p.array() != expected).any()) ++torn;
        if (snap->loss != expected * static_cast<double>(p.size())) ++torn;
        if (snap->version < last) ++regressions;
        last = snap->version;
      }
    });
  for (std::uint64_t v = 1; v <= 3000; ++v) {
    Mlp next = base;
    next.parameters().setConstant(static_cast<double>(v));
    const double sum = next.parameters().sum();
    channel.publish(std::make_shared<const PolicySnapshot>(PolicySnapshot{next, v, 0, sum}));
  }
  done = true;
  for (auto& t : readers) t.join();
  CHECK(torn == 0);
  CHECK(regressions == 0);
  CHECK(channel.latest()->version == 3000);
}

TEST_CASE("worker thread consumes appended samples") {
  HumanDataset ds;
  PolicyTrainer trainer(ds, seeded_policy(6), TrainerConfig{});
  UpdatePolicyWorker worker(trainer);
  for (int i = 0; i < 5; ++i) {
    ds.append(sample_with({0.1 * i, 0, 0, -0.2}, 0.1 * i));
    worker.notify();
  }
  worker.wait_idle();
  CHECK(trainer.status().watermark == 5);
  CHECK(trainer.latest()->version >= 1);
  worker.stop();
}

TEST_CASE("trainer config round-trip") {
  TrainerConfig cfg;
  cfg.batch_size = 32;
  cfg.optimizer.learning_rate = 3e-5;
  const auto back = TrainerConfig::from_tree(cfg.to_tree());
  CHECK(back.batch_size == 32);
  CHECK(back.optimizer.learning_rate == 3e-5);
  CHECK(back.loss_threshold == 0.005);
  CHECK(back.max_epochs_per_burst == 2000);
}
