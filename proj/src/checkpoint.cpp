#include "col/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace col {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr std::array<char, 8> kMagic = {'C', 'O', 'L', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <typename T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void doubles(const Eigen::VectorXd& v) {
    pod(static_cast<std::uint64_t>(v.size()));
    out_.write(reinterpret_cast<const char*>(v.data()),
               static_cast<std::streamsize>(v.size() * sizeof(double)));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, const std::string& name) : in_(in), name_(name) {}
  template <typename T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in_) fail("truncated file");
    return v;
  }
  Eigen::VectorXd doubles(std::uint64_t max_len) {
    const auto n = pod<std::uint64_t>();
    if (n > max_len) fail("implausible vector length");
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    in_.read(reinterpret_cast<char*>(v.data()),
             static_cast<std::streamsize>(n * sizeof(double)));
    if (!in_) fail("truncated parameter block");
    return v;
  }
  [[noreturn]] void fail(const std::string& why) {
    throw CheckpointError("checkpoint " + name_ + ": " + why);
  }

 private:
  std::istream& in_;
  std::string name_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ostringstream buf(std::ios::binary);
  Writer w(buf);
  buf.write(kMagic.data(), kMagic.size());
  w.pod(kVersion);
  w.pod(ckpt.config_hash);
  w.pod(static_cast<std::uint32_t>(ckpt.tag.size()));
  buf.write(ckpt.tag.data(), static_cast<std::streamsize>(ckpt.tag.size()));
  const auto& sizes = ckpt.policy.sizes();
  w.pod(static_cast<std::uint32_t>(sizes.size()));
  for (int s : sizes) w.pod(static_cast<std::int32_t>(s));
  w.pod(static_cast<std::uint8_t>(ckpt.policy.hidden_activation()));
  w.pod(static_cast<std::uint8_t>(ckpt.policy.output_activation()));
  w.doubles(ckpt.policy.parameters());
  w.pod(ckpt.optimizer.learning_rate);
  w.pod(ckpt.optimizer.decay);
  w.pod(ckpt.optimizer.epsilon);
  w.doubles(ckpt.optimizer.cache);

  // Write to a sibling temp file, then rename, so readers never see a torn file.
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
    const std::string bytes = buf.str();
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint " + path.string() + ": cannot open");
  Reader r(in, path.string());

  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) r.fail("bad magic");
  if (r.pod<std::uint32_t>() != kVersion) r.fail("unsupported version");

  Checkpoint ckpt;
  ckpt.config_hash = r.pod<std::uint64_t>();
  const auto tag_len = r.pod<std::uint32_t>();
  if (tag_len > 4096) r.fail("implausible tag length");
  ckpt.tag.resize(tag_len);
  in.read(ckpt.tag.data(), tag_len);
  if (!in) r.fail("truncated tag");

  const auto n_sizes = r.pod<std::uint32_t>();
  if (n_sizes < 2 || n_sizes > 64) r.fail("implausible layer count");
  std::vector<int> sizes;
  for (std::uint32_t i = 0; i < n_sizes; ++i) {
    const auto s = r.pod<std::int32_t>();
    if (s < 1 || s > (1 << 20)) r.fail("implausible layer size");
    sizes.push_back(s);
  }
  const auto hidden = r.pod<std::uint8_t>();
  const auto output = r.pod<std::uint8_t>();
  if (hidden > 2 || output > 2) r.fail("unknown activation");
  ckpt.policy = Mlp(sizes, static_cast<Activation>(hidden), static_cast<Activation>(output));
  const auto expected = static_cast<std::uint64_t>(ckpt.policy.parameter_count());
  Eigen::VectorXd params = r.doubles(expected);
  if (static_cast<std::uint64_t>(params.size()) != expected)
    r.fail("parameter count does not match layer shapes");
  ckpt.policy.set_parameters(params);

  ckpt.optimizer.learning_rate = r.pod<double>();
  ckpt.optimizer.decay = r.pod<double>();
  ckpt.optimizer.epsilon = r.pod<double>();
  ckpt.optimizer.cache = r.doubles(expected);
  if (ckpt.optimizer.cache.size() != 0 &&
      static_cast<std::uint64_t>(ckpt.optimizer.cache.size()) != expected)
    r.fail("optimizer cache does not match layer shapes");
  if (in.peek() != std::char_traits<char>::eof()) r.fail("trailing bytes");
  return ckpt;
}

}  // namespace col
