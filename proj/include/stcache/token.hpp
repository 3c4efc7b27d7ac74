// Copyright (C) 2026 The stcache Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stcache/numeric.hpp"

namespace stcache {

/// Identity of an original token: (frame, index within frame). Merged tokens live in a reserved
/// namespace with frame == kMergedFrame and a monotonically increasing index.
struct TokenId {
    std::int64_t frame = 0;
    std::int64_t index = 0;

    static constexpr std::int64_t kMergedFrame = -1;

    bool is_merged() const noexcept {
        return frame == kMergedFrame;
    }

    friend auto operator<=>(const TokenId&, const TokenId&) = default;
};

struct Point3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    friend bool operator==(const Point3&, const Point3&) = default;
};

enum class Origin : std::uint8_t {
    fresh,      ///< current-chunk token during attention
    reference,  ///< first-frame token, never evicted
    window,
    anchor,
    merged,     ///< long-term voxel representative
    buffered,   ///< evicted original waiting in a voxel buffer
};

const char* to_string(Origin origin);

struct CachedToken {
    TokenId id;
    Vec key;
    Vec value;
    double score = 0.0;
    std::optional<Point3> position;
    std::int64_t count = 1;  ///< original tokens represented
    double weight = 1.0;     ///< cumulative fusion weight Z
    Origin origin = Origin::fresh;
};

/// Projected q/k/v of one frame for a single (layer, head) channel.
struct FrameTokens {
    std::int64_t frame_idx = 0;
    std::vector<Vec> queries;
    std::vector<Vec> keys;
    std::vector<Vec> values;
    std::vector<std::optional<Point3>> positions;

    std::size_t size() const noexcept {
        return keys.size();
    }
};

/// Throws ErrorCode::dimension if the four per-token arrays disagree in length or width.
void check_frame_shape(const FrameTokens& frame, std::size_t tokens, std::size_t head_dim);

struct CacheConfig {
    double gamma = 0.9;             ///< score decay
    double lambda = 0.8;            ///< cosine threshold for one-to-one merging
    double voxel_size = 0.05;
    std::size_t g_cap = 4;          ///< long-term representatives per voxel
    std::size_t e_cap = 8;          ///< buffered evictions per voxel
    double knn_radius_mult = 2.0;   ///< retrieval radius in voxel sizes
    std::size_t window_frames = 4;
    double budget_multiplier = 8.0; ///< budget beyond the reference frame, in frames' worth of tokens
    double window_frac = 0.5;
    double anchor_frac = 0.25;
    double retrieve_frac = 0.25;
    std::size_t chunk_size = 4;
    bool half_precision = false;
};

/// Every violated constraint, one message each. Empty means the config is usable.
std::vector<std::string> validate_config(const CacheConfig& config);

}  // namespace stcache
