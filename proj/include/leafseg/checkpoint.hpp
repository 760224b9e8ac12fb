#pragma once

#include <string>
#include <utility>
#include <vector>

#include "leafseg/tensor.hpp"

namespace leafseg {

// Checkpoint file layout, all integers little-endian:
//   magic "VRDT", format version u32, then per-parameter records of
//   (name length u32, UTF-8 name, rank u32, dims u64[rank], f32 payload)
// until end of file.

using NamedTensors = std::vector<std::pair<std::string, ad::Tensor>>;

void save_checkpoint(const std::string& path, const NamedTensors& tensors);

/// Throws std::runtime_error on missing file, bad magic or truncation.
NamedTensors load_checkpoint(const std::string& path);

}  // namespace leafseg
