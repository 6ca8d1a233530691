#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "planeq/tensor.hpp"

namespace planeq::io {

// Binary tensor format:
//   magic "PQT1" | dtype u8 (0 = f32) | ndim u8 | dims u32-le each |
//   payload f32-le row-major.
// Doubles are rounded to f32 on write; readers return doubles.

void write_tensor(std::FILE* f, const Tensor& t);
Tensor read_tensor(std::FILE* f);

void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

// Length-prefixed (name, tensor) records, used by checkpoints and multi-map
// blobs.
void write_named_tensor(std::FILE* f, const std::string& name, const Tensor& t);
std::pair<std::string, Tensor> read_named_tensor(std::FILE* f);

uint64_t file_fnv64(const std::string& path);

}  // namespace planeq::io
