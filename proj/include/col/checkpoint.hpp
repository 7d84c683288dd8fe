#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "col/mlp.hpp"
#include "col/optimizer.hpp"

namespace col {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Policy parameters plus optimizer state. Binary layout in
// docs/checkpoint_format.md.
struct Checkpoint {
  Mlp policy;
  RmsProp optimizer;
  std::uint64_t config_hash = 0;
  std::string tag;  // free-form id, e.g. "col/b8/s2/e5"
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace col
