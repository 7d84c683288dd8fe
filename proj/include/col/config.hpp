#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include <boost/property_tree/ptree.hpp>

namespace col {

// Human-editable key-value configuration. Top-level keys are flat; experiment
// files group the per-module blocks into INI sections ([task], [oracle], ...).
using ConfigTree = boost::property_tree::ptree;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

ConfigTree parse_config(const std::string& text);
ConfigTree load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ConfigTree& tree);
std::string config_text(const ConfigTree& tree);

// FNV-1a over the canonical text form; stored in checkpoints.
std::uint64_t config_hash(const ConfigTree& tree);

// Shortest decimal form that round-trips the double exactly.
std::string format_double(double value);

void put_double(ConfigTree& tree, const std::string& key, double value);

// Read helpers that fail with the offending key in the message.
double read_double(const ConfigTree& tree, const std::string& key,
                   double fallback);
std::int64_t read_int(const ConfigTree& tree, const std::string& key,
                      std::int64_t fallback);
std::uint64_t read_uint(const ConfigTree& tree, const std::string& key,
                        std::uint64_t fallback);
std::string read_string(const ConfigTree& tree, const std::string& key,
                        const std::string& fallback);

// Child section, or an empty tree when absent.
ConfigTree section(const ConfigTree& tree, const std::string& name);

}  // namespace col
