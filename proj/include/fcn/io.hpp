#pragma once

#include <map>
#include <string>
#include <vector>

#include "fcn/tensor.hpp"

namespace fcn {

// Tensor container, little-endian throughout:
//   "FCNT" | u32 version=1 | u32 ndim=4 | u32 dims[4] | float32 payload
// A 1x1x1x1 tensor is exactly 32 bytes.
void write_tensor(const std::string& path, const Tensor& t);
Tensor read_tensor(const std::string& path);

// In-memory forms, used by the checkpoint container.
void append_tensor_bytes(std::vector<uint8_t>& out, const Tensor& t);
Tensor parse_tensor_bytes(const uint8_t* p, size_t len, size_t& off,
                          const std::string& what);

// Checkpoint container:
//   "FCNZ" | u32 version=1 | u32 count | count * (u16 name_len | name | tensor record)
// Entries are sorted by name; the reader rejects unsorted or duplicate names.
using Checkpoint = std::map<std::string, Tensor>;
void write_checkpoint(const std::string& path, const Checkpoint& entries);
Checkpoint read_checkpoint(const std::string& path);

// Binary PGM (P5), maxval 255. Label maps only; any other maxval is rejected.
void write_pgm(const std::string& path, const LabelMap& m);
LabelMap read_pgm(const std::string& path);

// Files directly inside dir whose name ends with ext, sorted by name.
std::vector<std::string> list_files(const std::string& dir, const std::string& ext);

}  // namespace fcn
