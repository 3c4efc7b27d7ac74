// Copyright (C) 2026 The stcache Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "stcache/token.hpp"

namespace stcache {

struct TemporalCacheConfig {
    double gamma = 0.9;
    std::size_t window_frames = 4;
    std::size_t anchor_budget = 0;
    /// Most frames a single ingest may carry (the chunk size).
    std::size_t max_ingest = std::numeric_limits<std::size_t>::max();
    bool half_precision = false;
};

/// Anchor ranking: higher score first, then more recent frame, then lower token index.
bool anchor_rank_before(const CachedToken& a, const CachedToken& b) noexcept;

/**
 * Working memory for one (layer, head): the first frame as a permanent reference, a FIFO window
 * of recent frames, and a budgeted set of anchors chosen by decayed cumulative attention.
 *
 * Per-step order: snapshot -> attend (external) -> update_scores -> ingest_frames -> select_anchors.
 * Snapshot order is fixed: reference, window frames oldest-first, anchors in ranking order as of
 * the last selection.
 */
class TemporalCache {
public:
    explicit TemporalCache(TemporalCacheConfig config);

    const TemporalCacheConfig& config() const noexcept {
        return m_config;
    }

    void register_reference(const FrameTokens& frame0);
    bool has_reference() const noexcept {
        return m_has_reference;
    }

    /**
     * Appends frames to the window and returns the tokens pushed out of it, oldest first.
     * `fresh_mass` (optional, one entry per token across all frames in order) initializes the
     * scores of the new tokens.
     */
    std::vector<CachedToken> ingest_frames(std::span<const FrameTokens> frames, std::span<const double> fresh_mass = {});

    /// score <- gamma * score + mass for every cached token, indexed in snapshot order.
    void update_scores(std::span<const double> mass);

    /// Keeps the anchor_budget best of (anchors + expelled); returns the rest for spatial caching.
    std::vector<CachedToken> select_anchors(std::vector<CachedToken> expelled);

    std::vector<CachedToken> snapshot() const;

    /// Visits tokens in snapshot order without copying.
    void for_each(const std::function<void(const CachedToken&)>& fn) const;

    std::size_t size() const noexcept;
    std::size_t reference_size() const noexcept {
        return m_reference.size();
    }
    std::size_t window_token_count() const noexcept;
    std::size_t window_frame_count() const noexcept {
        return m_window.size();
    }
    std::size_t anchor_count() const noexcept {
        return m_anchors.size();
    }

    const std::vector<CachedToken>& reference() const noexcept {
        return m_reference;
    }
    const std::vector<CachedToken>& anchors() const noexcept {
        return m_anchors;
    }

    /// Entries beyond binary16 range clamped while quantizing (half_precision only).
    std::size_t saturated_entries() const noexcept {
        return m_saturated;
    }

private:
    struct WindowFrame {
        std::int64_t frame_idx;
        std::vector<CachedToken> tokens;
    };

    CachedToken make_token(const FrameTokens& frame, std::size_t i, double score, Origin origin);

    TemporalCacheConfig m_config;
    bool m_has_reference = false;
    std::optional<std::int64_t> m_last_frame;
    std::vector<CachedToken> m_reference;
    std::deque<WindowFrame> m_window;
    std::vector<CachedToken> m_anchors;
    std::size_t m_saturated = 0;
};

}  // namespace stcache
