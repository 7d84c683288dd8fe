#include "col/trainer.hpp"

#include <chrono>
#include <cmath>

namespace col {

ConfigTree TrainerConfig::to_tree() const {
  ConfigTree t = optimizer.to_tree();
  t.put("batch_size", batch_size);
  put_double(t, "loss_threshold", loss_threshold);
  t.put("max_epochs_per_burst", max_epochs_per_burst);
  t.put("seed", seed);
  return t;
}

TrainerConfig TrainerConfig::from_tree(const ConfigTree& t) {
  TrainerConfig c;
  c.optimizer = RmsProp::from_tree(t);
  c.batch_size = static_cast<std::size_t>(read_uint(t, "batch_size", c.batch_size));
  c.loss_threshold = read_double(t, "loss_threshold", c.loss_threshold);
  c.max_epochs_per_burst =
      static_cast<std::size_t>(read_uint(t, "max_epochs_per_burst", c.max_epochs_per_burst));
  c.seed = read_uint(t, "seed", c.seed);
  if (c.batch_size < 1) throw ConfigError("trainer config: batch_size must be >= 1");
  if (c.max_epochs_per_burst < 1)
    throw ConfigError("trainer config: max_epochs_per_burst must be >= 1");
  return c;
}

SnapshotChannel::SnapshotChannel(std::shared_ptr<const PolicySnapshot> initial)
    : current_(std::move(initial)) {}

std::shared_ptr<const PolicySnapshot> SnapshotChannel::latest() const {
  std::lock_guard lock(mutex_);
  return current_;
}

void SnapshotChannel::publish(std::shared_ptr<const PolicySnapshot> snapshot) {
  std::lock_guard lock(mutex_);
  current_ = std::move(snapshot);
}

PolicyTrainer::PolicyTrainer(const HumanDataset& dataset, Mlp initial, TrainerConfig cfg)
    : dataset_(dataset),
      cfg_(cfg),
      working_(std::move(initial)),
      optimizer_(cfg.optimizer),
      rng_(make_rng(cfg.seed, 0x7472)),
      channel_(std::make_shared<const PolicySnapshot>(PolicySnapshot{working_, 0, 0, 0.0})) {
  optimizer_.reset();
}

std::size_t PolicyTrainer::advance(std::size_t max_epochs) {
  std::size_t steps = 0;
  TrainerStatus st = status();
  if (st.halted) return 0;
  while (steps < max_epochs) {
    if (!in_burst_) {
      if (dataset_.new_samples_since(st.watermark) == 0) break;
      in_burst_ = true;
      burst_target_ = dataset_.size();
      burst_epochs_ = 0;
      st.busy = true;
      set_status(st);
    }
    const Minibatch batch = dataset_.sample_minibatch(cfg_.batch_size, rng_);
    LossAndGradient lg;
    try {
      lg = mse_loss_and_gradient(working_, batch);
    } catch (const NumericError&) {
      lg.loss = std::nan("");
    }
    if (!std::isfinite(lg.loss)) {
      // Keep the last published snapshot; the session is flagged via status.
      working_ = channel_.latest()->policy;
      in_burst_ = false;
      st = status();
      st.halted = true;
      st.busy = false;
      set_status(st);
      return steps;
    }
    if (lg.loss <= cfg_.loss_threshold) {
      finish_burst(lg.loss);
      st = status();
      continue;
    }
    optimizer_.step(working_.parameters(), lg.gradient);
    ++steps;
    ++burst_epochs_;
    if (burst_epochs_ >= cfg_.max_epochs_per_burst) {
      finish_burst(lg.loss);
      st = status();
    }
  }
  if (steps > 0) {
    std::lock_guard lock(status_mutex_);
    status_.total_epochs += steps;
  }
  return steps;
}

std::size_t PolicyTrainer::drain() {
  std::size_t total = 0;
  while (!idle()) {
    const std::size_t n = advance(cfg_.max_epochs_per_burst);
    total += n;
    if (n == 0 && status().halted) break;
  }
  return total;
}

bool PolicyTrainer::idle() const {
  const TrainerStatus st = status();
  return st.halted || (!in_burst_ && dataset_.new_samples_since(st.watermark) == 0);
}

void PolicyTrainer::finish_burst(double loss) {
  ++version_;
  channel_.publish(std::make_shared<const PolicySnapshot>(
      PolicySnapshot{working_, version_, burst_target_, loss}));
  in_burst_ = false;
  std::lock_guard lock(status_mutex_);
  status_.watermark = burst_target_;
  status_.last_loss = loss;
  status_.epochs_run_last_burst = burst_epochs_;
  status_.bursts += 1;
  status_.busy = false;
}

TrainerStatus PolicyTrainer::status() const {
  std::lock_guard lock(status_mutex_);
  return status_;
}

void PolicyTrainer::set_status(const TrainerStatus& s) {
  std::lock_guard lock(status_mutex_);
  status_ = s;
}

UpdatePolicyWorker::UpdatePolicyWorker(PolicyTrainer& trainer, std::size_t epochs_per_slice)
    : trainer_(trainer), slice_(epochs_per_slice), thread_([this] { run(); }) {}

UpdatePolicyWorker::~UpdatePolicyWorker() { stop(); }

void UpdatePolicyWorker::notify() { wake_.notify_one(); }

void UpdatePolicyWorker::stop() {
  if (!thread_.joinable()) return;
  stop_.store(true);
  wake_.notify_all();
  thread_.join();
  idle_.notify_all();
}

void UpdatePolicyWorker::wait_idle() {
  std::unique_lock lock(mutex_);
  wake_.notify_one();
  idle_.wait(lock, [&] { return stop_.load() || trainer_.idle(); });
}

void UpdatePolicyWorker::run() {
  using namespace std::chrono_literals;
  while (!stop_.load()) {
    const std::size_t steps = trainer_.advance(slice_);
    if (steps == 0 && trainer_.idle()) {
      std::unique_lock lock(mutex_);
      idle_.notify_all();
      wake_.wait_for(lock, 2ms);
    }
  }
}

}  // namespace col
