#include "col/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <fmt/format.h>

namespace col {

namespace pt = boost::property_tree;

namespace {

pt::ptree::path_type flat_path(const std::string& key) {
  // Keys never contain '/', so dots stay part of the key.
  return pt::ptree::path_type(key, '/');
}

}  // namespace

ConfigTree parse_config(const std::string& text) {
  std::istringstream in(text);
  ConfigTree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return tree;
}

ConfigTree load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

void save_config(const std::filesystem::path& path, const ConfigTree& tree) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write config file " + path.string());
  out << config_text(tree);
  if (!out) throw ConfigError("failed writing config file " + path.string());
}

std::string config_text(const ConfigTree& tree) {
  std::ostringstream out;
  pt::write_ini(out, tree);
  return out.str();
}

std::uint64_t config_hash(const ConfigTree& tree) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config_text(tree)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string format_double(double value) { return fmt::format("{}", value); }

void put_double(ConfigTree& tree, const std::string& key, double value) {
  tree.put(flat_path(key), format_double(value));
}

double read_double(const ConfigTree& tree, const std::string& key,
                   double fallback) {
  auto raw = tree.get_optional<std::string>(flat_path(key));
  if (!raw) return fallback;
  try {
    std::size_t used = 0;
    double value = std::stod(*raw, &used);
    if (used != raw->size()) throw std::invalid_argument(*raw);
    return value;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': not a number: '" + *raw + "'");
  }
}

std::int64_t read_int(const ConfigTree& tree, const std::string& key,
                      std::int64_t fallback) {
  auto raw = tree.get_optional<std::string>(flat_path(key));
  if (!raw) return fallback;
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(raw->data(), raw->data() + raw->size(), value);
  if (ec != std::errc() || ptr != raw->data() + raw->size())
    throw ConfigError("config key '" + key + "': not an integer: '" + *raw + "'");
  return value;
}

std::uint64_t read_uint(const ConfigTree& tree, const std::string& key,
                        std::uint64_t fallback) {
  auto raw = tree.get_optional<std::string>(flat_path(key));
  if (!raw) return fallback;
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(raw->data(), raw->data() + raw->size(), value);
  if (ec != std::errc() || ptr != raw->data() + raw->size())
    throw ConfigError("config key '" + key + "': not an unsigned integer: '" +
                      *raw + "'");
  return value;
}

std::string read_string(const ConfigTree& tree, const std::string& key,
                        const std::string& fallback) {
  return tree.get<std::string>(flat_path(key), fallback);
}

ConfigTree section(const ConfigTree& tree, const std::string& name) {
  auto child = tree.get_child_optional(flat_path(name));
  return child ? *child : ConfigTree{};
}

}  // namespace col
