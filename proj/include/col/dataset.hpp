#pragma once

#include <array>
#include <atomic>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "col/mlp.hpp"
#include "col/perception.hpp"
#include "col/rng.hpp"

namespace col {

enum class SampleSource { Demonstration, Intervention };

std::string_view to_string(SampleSource source);
SampleSource parse_sample_source(std::string_view text);

struct HumanSample {
  int episode_id = 0;
  int step = 0;
  SampleSource source = SampleSource::Demonstration;
  Observation observation{};  // normalized policy input
  std::array<double, kActionDim> action{};

  bool is_finite() const;
  bool operator==(const HumanSample&) const = default;
};

class StorageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// CSV header: episode,step,source,o0..o14,a0..a3
std::string dataset_csv_header();
std::string format_sample_row(const HumanSample& sample);
HumanSample parse_sample_row(std::string_view line);

// Reads a whole dataset file; throws DatasetError on schema violations.
std::vector<HumanSample> load_samples(const std::filesystem::path& path);

// Append-only store of human-provided observation/action pairs, mirrored to
// a CSV file. One writer appends; any number of readers may sample
// concurrently and always observe a prefix of the appended rows.
class HumanDataset {
 public:
  enum class OpenMode { Truncate, Append };

  // No backing file; rows live in memory only.
  HumanDataset() = default;
  // Truncate starts an empty file with the header row. Append loads the rows
  // already in the file and continues after them.
  HumanDataset(const std::filesystem::path& path, OpenMode mode);

  HumanDataset(const HumanDataset&) = delete;
  HumanDataset& operator=(const HumanDataset&) = delete;

  // Persists the row (flushed) before it becomes visible to readers.
  // Throws StorageError when the row cannot be written.
  void append(const HumanSample& sample);

  std::size_t size() const { return count_.load(std::memory_order_acquire); }
  std::size_t new_samples_since(std::size_t watermark) const;

  // n rows uniformly with replacement; throws DatasetError when empty.
  Minibatch sample_minibatch(std::size_t n, Rng& rng) const;

  HumanSample at(std::size_t index) const;
  std::vector<HumanSample> snapshot() const;
  std::size_t count_source(SampleSource source) const;

  const std::optional<std::filesystem::path>& path() const { return path_; }

 private:
  mutable std::shared_mutex mutex_;
  std::vector<HumanSample> rows_;
  std::atomic<std::size_t> count_{0};
  std::optional<std::filesystem::path> path_;
  std::ofstream file_;
};

}  // namespace col
