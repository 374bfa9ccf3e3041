#pragma once

#include <filesystem>
#include <istream>
#include <ostream>

#include "adx/core/tensor.hpp"

namespace adx {

/// Binary tensor layout, all little-endian:
///   "TNSR" | u32 version (=1) | u32 rank | u64 dims[rank] | f64 values[prod(dims)]
inline constexpr std::uint32_t kTensorFormatVersion = 1;

void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace adx
