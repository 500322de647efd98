#pragma once

#include <map>
#include <string>

#include "core/tensor.hpp"

namespace chromo {

// Named-tensor checkpoint container. On disk (all little-endian):
//   "CSCK" | u32 version | u64 meta_len | meta bytes (JSON) |
//   u64 entry_count | entries sorted by name, each:
//     u64 name_len | name | u32 rank | i32 dims[rank] | f32 data[numel]
// Entries are kept in a sorted map so identical contents always serialize to
// identical bytes, which the determinism checks rely on.
struct Checkpoint {
    std::string meta_json;
    std::map<std::string, Tensor<float>> tensors;
};

// Writes to path+".tmp" then renames, so an interrupted save never clobbers
// the previous good checkpoint.
void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace chromo
