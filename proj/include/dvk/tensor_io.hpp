#pragma once

#include <filesystem>
#include <iosfwd>

#include "dvk/tensor.hpp"

namespace dvk {

// DVKT tensor file, format version 1:
//   bytes 0..3  magic "DVKT"
//   byte  4     format version (1)
//   byte  5     dtype code (1 = f64 little-endian)
//   byte  6     rank (1..4)
//   then rank x u32 little-endian dims
//   then row-major payload of 8-byte IEEE-754 little-endian values
// No padding, no checksum.

void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

// Header summary (shape only) without loading the payload; for inspection.
Shape read_tensor_header(const std::filesystem::path& path);

}  // namespace dvk
