#pragma once

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <thread>

#include "col/config.hpp"
#include "col/dataset.hpp"
#include "col/mlp.hpp"
#include "col/optimizer.hpp"
#include "col/rng.hpp"

namespace col {

struct TrainerConfig {
  std::size_t batch_size = 64;
  double loss_threshold = 0.005;
  std::size_t max_epochs_per_burst = 2000;
  RmsProp optimizer;  // learning rate, decay, epsilon
  std::uint64_t seed = 0;

  ConfigTree to_tree() const;
  static TrainerConfig from_tree(const ConfigTree& tree);
};

// Read-only policy published by the trainer.
struct PolicySnapshot {
  Mlp policy;
  std::uint64_t version = 0;
  std::size_t watermark = 0;  // dataset rows covered by this snapshot
  double loss = 0.0;
};

// Single-slot holder of the latest snapshot. Publication swaps a pointer to
// an immutable object, so readers never see a partially updated policy.
class SnapshotChannel {
 public:
  explicit SnapshotChannel(std::shared_ptr<const PolicySnapshot> initial);

  std::shared_ptr<const PolicySnapshot> latest() const;
  void publish(std::shared_ptr<const PolicySnapshot> snapshot);

 private:
  mutable std::mutex mutex_;
  std::shared_ptr<const PolicySnapshot> current_;
};

struct TrainerStatus {
  std::size_t watermark = 0;
  double last_loss = 0.0;
  std::size_t epochs_run_last_burst = 0;
  std::size_t total_epochs = 0;
  std::uint64_t bursts = 0;
  bool busy = false;
  bool halted = false;
};

// Burst trainer. When the dataset holds rows past the watermark it starts a
// burst: sample a minibatch, stop if its loss is at or below the threshold,
// otherwise take one RMSProp step; the burst also ends after
// max_epochs_per_burst steps. At burst end the working copy is published
// and the watermark advances to the dataset size seen at burst start.
//
// Not thread-safe on its own; `status()` may be read from any thread.
class PolicyTrainer {
 public:
  PolicyTrainer(const HumanDataset& dataset, Mlp initial, TrainerConfig cfg);

  // Runs at most `max_epochs` optimizer steps. Returns the steps taken.
  std::size_t advance(std::size_t max_epochs);
  // Runs bursts until no unconsumed samples remain.
  std::size_t drain();
  bool idle() const;

  SnapshotChannel& channel() { return channel_; }
  std::shared_ptr<const PolicySnapshot> latest() const { return channel_.latest(); }
  TrainerStatus status() const;
  const RmsProp& optimizer() const { return optimizer_; }
  const TrainerConfig& config() const { return cfg_; }

 private:
  void finish_burst(double loss);
  void set_status(const TrainerStatus& s);

  const HumanDataset& dataset_;
  TrainerConfig cfg_;
  Mlp working_;
  RmsProp optimizer_;
  Rng rng_;
  SnapshotChannel channel_;

  std::atomic<bool> in_burst_{false};
  std::size_t burst_target_ = 0;
  std::size_t burst_epochs_ = 0;
  std::uint64_t version_ = 0;

  mutable std::mutex status_mutex_;
  TrainerStatus status_;
};

// Runs a PolicyTrainer on its own thread for the lifetime of the object,
// polling the dataset for new rows. Never blocks the caller.
class UpdatePolicyWorker {
 public:
  explicit UpdatePolicyWorker(PolicyTrainer& trainer, std::size_t epochs_per_slice = 8);
  ~UpdatePolicyWorker();

  UpdatePolicyWorker(const UpdatePolicyWorker&) = delete;
  UpdatePolicyWorker& operator=(const UpdatePolicyWorker&) = delete;

  // Wakes the worker early (e.g. right after an append).
  void notify();
  // Blocks until the trainer has consumed every row present at call time.
  void wait_idle();
  void stop();

 private:
  void run();

  PolicyTrainer& trainer_;
  std::size_t slice_;
  std::atomic<bool> stop_{false};
  std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable idle_;
  std::thread thread_;
};

}  // namespace col
