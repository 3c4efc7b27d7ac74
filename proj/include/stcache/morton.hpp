// Copyright (C) 2026 The stcache Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "stcache/token.hpp"

namespace stcache {

struct VoxelCoord {
    std::int64_t x = 0;
    std::int64_t y = 0;
    std::int64_t z = 0;

    friend auto operator<=>(const VoxelCoord&, const VoxelCoord&) = default;
};

/// Voxel indices must lie in [-kVoxelBound, kVoxelBound) on every axis.
inline constexpr std::int64_t kVoxelBound = std::int64_t{1} << 20;

bool in_morton_range(const VoxelCoord& c) noexcept;

/// Half-open cells [i*r, (i+1)*r): component-wise floor(p / voxel_size).
/// Throws ErrorCode::out_of_range when the point is not finite or falls outside the index band.
VoxelCoord voxel_of(const Point3& p, double voxel_size);

/// Cell center ((i + 0.5) * voxel_size per axis).
Point3 voxel_center(const VoxelCoord& c, double voxel_size) noexcept;

/// Biases each index by 2^20 into 21 unsigned bits and interleaves them, x in bits 0,3,6,...
std::uint64_t morton_encode(const VoxelCoord& c);
VoxelCoord morton_decode(std::uint64_t code);

}  // namespace stcache
