#pragma once

#include <string>
#include <vector>

#include "mffa/tensor.hpp"

namespace mffa {

struct NamedTensor {
    std::string name;
    Tensor value;
};

// Container format: magic "MFFA", u32 version, u32 tensor count, then per
// tensor: u32 name length, UTF-8 name, u32 rank, u64 extents, raw IEEE-754
// doubles. All integers and values little-endian.
void save_tensors(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_tensors(const std::string& path);

// Encodes a UTF-8 string as a rank-1 tensor of byte values and back, so
// structured metadata can ride inside the container.
Tensor string_to_tensor(const std::string& s);
std::string tensor_to_string(const Tensor& t);

}  // namespace mffa
