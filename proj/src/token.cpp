// Copyright (C) 2026 The stcache Authors
// SPDX-License-Identifier: Apache-2.0

#include "stcache/token.hpp"

#include <cmath>

#include "stcache/error.hpp"

namespace stcache {

const char* to_string(Origin origin) {
    switch (origin) {
    case Origin::fresh:
        return "fresh";
    case Origin::reference:
        return "reference";
    case Origin::window:
        return "window";
    case Origin::anchor:
        return "anchor";
    case Origin::merged:
        return "merged";
    case Origin::buffered:
        return "buffered";
    }
    return "unknown";
}

void check_frame_shape(const FrameTokens& frame, std::size_t tokens, std::size_t head_dim) {
    auto fail = [&](const std::string& what) {
        throw Error(ErrorCode::dimension, "frame " + std::to_string(frame.frame_idx) + ": " + what);
    };
    if (frame.queries.size() != tokens || frame.keys.size() != tokens || frame.values.size() != tokens ||
        frame.positions.size() != tokens) {
        fail("expected " + std::to_string(tokens) + " tokens per frame");
    }
    for (std::size_t i = 0; i < tokens; ++i) {
        if (frame.queries[i].size() != head_dim || frame.keys[i].size() != head_dim ||
            frame.values[i].size() != head_dim) {
            fail("token " + std::to_string(i) + " does not have head dimension " + std::to_string(head_dim));
        }
    }
}

std::vector<std::string> validate_config(const CacheConfig& c) {
    std::vector<std::string> errors;
    if (!(c.gamma > 0.0 && c.gamma < 1.0)) {
        errors.emplace_back("gamma out of (0,1)");
    }
    if (!(c.lambda > -1.0 && c.lambda <= 1.0)) {
        errors.emplace_back("lambda out of (-1,1]");
    }
    if (!(c.voxel_size > 0.0) || !std::isfinite(c.voxel_size)) {
        errors.emplace_back("voxel_size must be positive and finite");
    }
    if (c.g_cap < 1) {
        errors.emplace_back("g_cap must be >= 1");
    }
    if (c.e_cap < 1) {
        errors.emplace_back("e_cap must be >= 1");
    }
    if (!(c.knn_radius_mult >= 0.0) || !std::isfinite(c.knn_radius_mult)) {
        errors.emplace_back("knn_radius_mult must be non-negative and finite");
    }
    if (c.window_frames < 1) {
        errors.emplace_back("window_frames must be >= 1");
    }
    if (!(c.budget_multiplier > 0.0) || !std::isfinite(c.budget_multiplier)) {
        errors.emplace_back("budget_multiplier must be positive and finite");
    }
    if (c.window_frac < 0.0 || c.anchor_frac < 0.0 || c.retrieve_frac < 0.0) {
        errors.emplace_back("budget fractions must be non-negative");
    }
    if (std::fabs(c.window_frac + c.anchor_frac + c.retrieve_frac - 1.0) > 1e-12) {
        errors.emplace_back("fractions sum != 1");
    }
    if (c.chunk_size < 1) {
        errors.emplace_back("chunk_size must be >= 1");
    }
    // window_frames * N <= window_frac * budget_multiplier * N; N cancels.
    if (static_cast<double>(c.window_frames) > c.window_frac * c.budget_multiplier + 1e-9) {
        errors.emplace_back("window_frames exceeds the window share of the budget");
    }
    return errors;
}

}  // namespace stcache
