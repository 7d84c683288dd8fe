#include "col/dataset.hpp"

#include <charconv>
#include <cmath>
#include <mutex>
#include <string>

#include <fmt/format.h>

namespace col {

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view field, const char* what) {
  T value{};
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw DatasetError(std::string("malformed ") + what + " field '" +
                       std::string(field) + "'");
  return value;
}

constexpr std::size_t kColumns = 3 + kObservationDim + kActionDim;

}  // namespace

std::string_view to_string(SampleSource source) {
  return source == SampleSource::Demonstration ? "demonstration" : "intervention";
}

SampleSource parse_sample_source(std::string_view text) {
  if (text == "demonstration") return SampleSource::Demonstration;
  if (text == "intervention") return SampleSource::Intervention;
  throw DatasetError("unknown sample source '" + std::string(text) + "'");
}

bool HumanSample::is_finite() const {
  for (double x : observation)
    if (!std::isfinite(x)) return false;
  for (double x : action)
    if (!std::isfinite(x)) return false;
  return true;
}

std::string dataset_csv_header() {
  std::string h = "episode,step,source";
  for (std::size_t i = 0; i < kObservationDim; ++i) h += fmt::format(",o{}", i);
  for (std::size_t i = 0; i < kActionDim; ++i) h += fmt::format(",a{}", i);
  return h;
}

std::string format_sample_row(const HumanSample& s) {
  std::string row = fmt::format("{},{},{}", s.episode_id, s.step, to_string(s.source));
  for (double x : s.observation) row += fmt::format(",{:.17g}", x);
  for (double x : s.action) row += fmt::format(",{:.17g}", x);
  return row;
}

HumanSample parse_sample_row(std::string_view line) {
  const auto fields = split_commas(line);
  if (fields.size() != kColumns)
    throw DatasetError("dataset row has " + std::to_string(fields.size()) +
                       " columns, expected " + std::to_string(kColumns));
  HumanSample s;
  s.episode_id = parse_number<int>(fields[0], "episode");
  s.step = parse_number<int>(fields[1], "step");
  s.source = parse_sample_source(fields[2]);
  for (std::size_t i = 0; i < kObservationDim; ++i)
    s.observation[i] = parse_number<double>(fields[3 + i], "observation");
  for (std::size_t i = 0; i < kActionDim; ++i)
    s.action[i] = parse_number<double>(fields[3 + kObservationDim + i], "action");
  if (!s.is_finite()) throw DatasetError("dataset row contains non-finite values");
  return s;
}

std::vector<HumanSample> load_samples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open dataset " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != dataset_csv_header())
    throw DatasetError("dataset " + path.string() + ": missing or wrong header");
  std::vector<HumanSample> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      rows.push_back(parse_sample_row(line));
    } catch (const DatasetError& e) {
      throw DatasetError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

HumanDataset::HumanDataset(const std::filesystem::path& path, OpenMode mode)
    : path_(path) {
  const bool regular = std::filesystem::is_regular_file(path);
  const bool resume = mode == OpenMode::Append && regular &&
                      std::filesystem::file_size(path) > 0;
  if (resume) {
    rows_ = load_samples(path);
    count_.store(rows_.size(), std::memory_order_release);
  }
  const bool write_header = mode == OpenMode::Truncate || (regular && !resume) ||
                            !std::filesystem::exists(path);
  file_.open(path, mode == OpenMode::Truncate ? std::ios::trunc : std::ios::app);
  if (!file_) throw StorageError("cannot open dataset file " + path.string());
  if (write_header) {
    file_ << dataset_csv_header() << '\n' << std::flush;
    if (!file_) throw StorageError("cannot write dataset header to " + path.string());
  }
}

void HumanDataset::append(const HumanSample& sample) {
  if (!sample.is_finite()) throw DatasetError("refusing to append non-finite sample");
  if (file_.is_open()) {
    file_ << format_sample_row(sample) << '\n' << std::flush;
    if (!file_)
      throw StorageError("failed to persist sample to " +
                         (path_ ? path_->string() : std::string("<memory>")));
  }
  std::unique_lock lock(mutex_);
  rows_.push_back(sample);
  count_.store(rows_.size(), std::memory_order_release);
}

std::size_t HumanDataset::new_samples_since(std::size_t watermark) const {
  const std::size_t n = size();
  return n > watermark ? n - watermark : 0;
}

Minibatch HumanDataset::sample_minibatch(std::size_t n, Rng& rng) const {
  std::shared_lock lock(mutex_);
  if (rows_.empty()) throw DatasetError("cannot sample from an empty dataset");
  std::uniform_int_distribution<std::size_t> pick(0, rows_.size() - 1);
  Minibatch batch;
  batch.observations.resize(kObservationDim, static_cast<Eigen::Index>(n));
  batch.actions.resize(kActionDim, static_cast<Eigen::Index>(n));
  for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(n); ++j) {
    const HumanSample& s = rows_[pick(rng)];
    for (std::size_t i = 0; i < kObservationDim; ++i) batch.observations(i, j) = s.observation[i];
    for (std::size_t i = 0; i < kActionDim; ++i) batch.actions(i, j) = s.action[i];
  }
  return batch;
}

HumanSample HumanDataset::at(std::size_t index) const {
  std::shared_lock lock(mutex_);
  return rows_.at(index);
}

std::vector<HumanSample> HumanDataset::snapshot() const {
  std::shared_lock lock(mutex_);
  return rows_;
}

std::size_t HumanDataset::count_source(SampleSource source) const {
  std::shared_lock lock(mutex_);
  std::size_t n = 0;
  for (const auto& r : rows_) n += r.source == source;
  return n;
}

}  // namespace col
