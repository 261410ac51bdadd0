#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "nbf/model.hpp"
#include "nbf/tensor.hpp"

namespace nbf {

/// Tensor payload: magic "NBF1", then per-tensor records of
///   u32 name length, UTF-8 name, u32 rank, u64 dims..., f64 values...
/// all little-endian. Records run to end of stream.
void write_tensor_payload(std::ostream& out,
                          const std::vector<std::pair<std::string, Tensor>>& tensors);
std::vector<std::pair<std::string, Tensor>> read_tensor_payload(std::istream& in);

/// Model checkpoint: a versioned key = value text block, a blank line, then
/// the tensor payload.
void save_checkpoint(const std::string& path, const ModelParams& params,
                     const ModelConfig& config);
std::pair<ModelParams, ModelConfig> load_checkpoint(const std::string& path);

}  // namespace nbf
