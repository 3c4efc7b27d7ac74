// Copyright (C) 2026 The stcache Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "stcache/error.hpp"
#include "stcache/morton.hpp"

using namespace stcache;

TEST(Morton, MatchesBitwiseInterleave) {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<std::int64_t> u(-kVoxelBound, kVoxelBound - 1);
    for (int i = 0; i < 20000; ++i) {
        const VoxelCoord c{u(rng), u(rng), u(rng)};
        ASSERT_EQ(morton_encode(c), oracle::morton_bitwise(c.x, c.y, c.z));
    }
}

TEST(Morton, RoundTripsCorners) {
    const std::int64_t lo = -kVoxelBound;
    const std::int64_t hi = kVoxelBound - 1;
    for (std::int64_t x : {lo, hi}) {
        for (std::int64_t y : {lo, hi}) {
            for (std::int64_t z : {lo, hi}) {
                const VoxelCoord c{x, y, z};
                EXPECT_EQ(morton_decode(morton_encode(c)), c);
            }
        }
    }
}

TEST(Morton, XOccupiesLowestBit) {
    const VoxelCoord origin{0, 0, 0};
    const std::uint64_t base = morton_encode(origin);
    EXPECT_EQ(morton_encode({1, 0, 0}) ^ base, 1u);
    EXPECT_EQ(morton_encode({0, 1, 0}) ^ base, 2u);
    EXPECT_EQ(morton_encode({0, 0, 1}) ^ base, 4u);
}

TEST(Morton, RejectsOutOfRange) {
    EXPECT_THROW(morton_encode({kVoxelBound, 0, 0}), Error);
    EXPECT_THROW(morton_encode({0, -kVoxelBound - 1, 0}), Error);
    EXPECT_THROW(morton_decode(std::uint64_t{1} << 63), Error);
}

TEST(VoxelOf, UsesHalfOpenFloorCells) {
    EXPECT_EQ(voxel_of({0.0, 0.049999, -0.0001}, 0.05), (VoxelCoord{0, 0, -1}));
    EXPECT_EQ(voxel_of({0.1, -0.1, 0.25}, 0.1), (VoxelCoord{1, -1, 2}));
    EXPECT_EQ(voxel_of({-1e-300, 0, 0}, 0.05).x, -1);
}

TEST(VoxelOf, CenterMapsBackToItsCell) {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<std::int64_t> u(-5000, 5000);
    for (int i = 0; i < 5000; ++i) {
        const VoxelCoord c{u(rng), u(rng), u(rng)};
        EXPECT_EQ(voxel_of(voxel_center(c, 0.05), 0.05), c);
    }
}

TEST(VoxelOf, RejectsNonFiniteAndFarPoints) {
    EXPECT_THROW(voxel_of({std::nan(""), 0, 0}, 0.05), Error);
    EXPECT_THROW(voxel_of({1e9, 0, 0}, 0.05), Error);
}
