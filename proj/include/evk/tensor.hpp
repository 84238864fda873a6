#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "evk/geom.hpp"

namespace evk {

/// Dense row-major float32 array. Binary container ("EVK0"):
///   magic "EVK0" | u8 dtype (0 = f32) | u32 ndim | u64 dims[ndim] | f32 payload
/// all little-endian.
struct TensorBlob {
  std::vector<std::uint64_t> dims;
  std::vector<float> data;

  TensorBlob() = default;
  TensorBlob(std::vector<std::uint64_t> d, std::vector<float> values);
  explicit TensorBlob(std::vector<std::uint64_t> d);

  std::uint64_t element_count() const;

  friend bool operator==(const TensorBlob&, const TensorBlob&) = default;
};

/// Product of extents; throws DimOverflow for zero extents or on overflow.
std::uint64_t checked_element_count(std::span<const std::uint64_t> dims);

std::vector<std::uint8_t> encode_tensor(const TensorBlob& blob);
TensorBlob decode_tensor(std::span<const std::uint8_t> bytes);

void write_tensor(const std::filesystem::path& path, const TensorBlob& blob);
TensorBlob read_tensor(const std::filesystem::path& path);

/// Occupancy grids are stored as [R, R, R] tensors of 0/1 values in cell
/// index order; any nonzero value reads as occupied.
TensorBlob grid_to_tensor(const VoxelGrid& grid);
VoxelGrid grid_from_tensor(const TensorBlob& blob, const Bounds& bounds = {});
void write_grid(const std::filesystem::path& path, const VoxelGrid& grid);
VoxelGrid read_grid(const std::filesystem::path& path, const Bounds& bounds = {});

}  // namespace evk
