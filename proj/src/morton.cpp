// Copyright (C) 2026 The stcache Authors
// SPDX-License-Identifier: Apache-2.0

#include "stcache/morton.hpp"

#include <cmath>
#include <string>

#include "stcache/error.hpp"

namespace stcache {

namespace {

// Spreads the low 21 bits of v so that bit i lands on bit 3i.
std::uint64_t spread_bits(std::uint64_t v) noexcept {
    v &= 0x1fffff;
    v = (v | (v << 32)) & 0x1f00000000ffffULL;
    v = (v | (v << 16)) & 0x1f0000ff0000ffULL;
    v = (v | (v << 8)) & 0x100f00f00f00f00fULL;
    v = (v | (v << 4)) & 0x10c30c30c30c30c3ULL;
    v = (v | (v << 2)) & 0x1249249249249249ULL;
    return v;
}

std::uint64_t compact_bits(std::uint64_t v) noexcept {
    v &= 0x1249249249249249ULL;
    v = (v ^ (v >> 2)) & 0x10c30c30c30c30c3ULL;
    v = (v ^ (v >> 4)) & 0x100f00f00f00f00fULL;
    v = (v ^ (v >> 8)) & 0x1f0000ff0000ffULL;
    v = (v ^ (v >> 16)) & 0x1f00000000ffffULL;
    v = (v ^ (v >> 32)) & 0x1fffff;
    return v;
}

}  // namespace

bool in_morton_range(const VoxelCoord& c) noexcept {
    auto ok = [](std::int64_t v) { return v >= -kVoxelBound && v < kVoxelBound; };
    return ok(c.x) && ok(c.y) && ok(c.z);
}

VoxelCoord voxel_of(const Point3& p, double voxel_size) {
    if (!(voxel_size > 0.0)) {
        throw Error(ErrorCode::invalid_argument, "voxel_of: voxel_size must be positive");
    }
    auto axis = [&](double v) -> std::int64_t {
        const double cell = std::floor(v / voxel_size);
        if (!std::isfinite(cell) || cell < -static_cast<double>(kVoxelBound) || cell >= static_cast<double>(kVoxelBound)) {
            throw Error(ErrorCode::out_of_range, "voxel_of: coordinate " + std::to_string(v) + " is outside the voxel grid");
        }
        return static_cast<std::int64_t>(cell);
    };
    return {axis(p.x), axis(p.y), axis(p.z)};
}

Point3 voxel_center(const VoxelCoord& c, double voxel_size) noexcept {
    return {(static_cast<double>(c.x) + 0.5) * voxel_size,
            (static_cast<double>(c.y) + 0.5) * voxel_size,
            (static_cast<double>(c.z) + 0.5) * voxel_size};
}

std::uint64_t morton_encode(const VoxelCoord& c) {
    if (!in_morton_range(c)) {
        throw Error(ErrorCode::out_of_range, "morton_encode: coordinate outside [-2^20, 2^20)");
    }
    const auto bx = static_cast<std::uint64_t>(c.x + kVoxelBound);
    const auto by = static_cast<std::uint64_t>(c.y + kVoxelBound);
    const auto bz = static_cast<std::uint64_t>(c.z + kVoxelBound);
    return spread_bits(bx) | (spread_bits(by) << 1) | (spread_bits(bz) << 2);
}

VoxelCoord morton_decode(std::uint64_t code) {
    if (code >> 63) {
        throw Error(ErrorCode::out_of_range, "morton_decode: code exceeds 63 bits");
    }
    return {static_cast<std::int64_t>(compact_bits(code)) - kVoxelBound,
            static_cast<std::int64_t>(compact_bits(code >> 1)) - kVoxelBound,
            static_cast<std::int64_t>(compact_bits(code >> 2)) - kVoxelBound};
}

}  // namespace stcache
