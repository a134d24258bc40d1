#pragma once

#include "cat/nn/model.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace cat::nn {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  Tensor<float> value;
};

/// Layout (all integers little-endian u32, see docs/checkpoint_format.md):
///   "CATCKPT1" | count | { name_len | name | ndim | dims... | float32 data }
void write_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensors(const std::filesystem::path& path);

/// Saves parameters as float32, plus an "arch" tensor holding the layer sizes.
void save_checkpoint(const std::filesystem::path& path, const PolicyValueNet<float>& model);
PolicyValueNet<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace cat::nn
