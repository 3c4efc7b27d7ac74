// Copyright (C) 2026 The stcache Authors
// SPDX-License-Identifier: Apache-2.0

#include "stcache/temporal_cache.hpp"

#include <algorithm>
#include <string>

#include "stcache/error.hpp"

namespace stcache {

bool anchor_rank_before(const CachedToken& a, const CachedToken& b) noexcept {
    if (a.score != b.score) {
        return a.score > b.score;
    }
    if (a.id.frame != b.id.frame) {
        return a.id.frame > b.id.frame;
    }
    return a.id.index < b.id.index;
}

TemporalCache::TemporalCache(TemporalCacheConfig config) : m_config(config) {
    if (!(config.gamma >= 0.0 && config.gamma < 1.0)) {
        throw Error(ErrorCode::config, "TemporalCache: gamma must lie in [0,1)");
    }
    if (config.window_frames < 1 || config.max_ingest < 1) {
        throw Error(ErrorCode::config, "TemporalCache: window_frames and max_ingest must be >= 1");
    }
}

CachedToken TemporalCache::make_token(const FrameTokens& frame, std::size_t i, double score, Origin origin) {
    CachedToken t;
    t.id = TokenId{frame.frame_idx, static_cast<std::int64_t>(i)};
    t.key = frame.keys[i];
    t.value = frame.values[i];
    t.score = score;
    t.position = frame.positions.empty() ? std::nullopt : frame.positions[i];
    t.origin = origin;
    if (m_config.half_precision) {
        m_saturated += half_roundtrip_inplace(t.key);
        m_saturated += half_roundtrip_inplace(t.value);
    }
    return t;
}

void TemporalCache::register_reference(const FrameTokens& frame0) {
    if (m_has_reference) {
        throw Error(ErrorCode::state, "register_reference: reference already registered");
    }
    if (m_last_frame) {
        throw Error(ErrorCode::state, "register_reference: cache is not empty");
    }
    m_reference.reserve(frame0.size());
    for (std::size_t i = 0; i < frame0.size(); ++i) {
        m_reference.push_back(make_token(frame0, i, 0.0, Origin::reference));
    }
    m_has_reference = true;
    m_last_frame = frame0.frame_idx;
}

std::vector<CachedToken> TemporalCache::ingest_frames(std::span<const FrameTokens> frames,
                                                      std::span<const double> fresh_mass) {
    if (frames.size() > m_config.max_ingest) {
        throw Error(ErrorCode::invalid_argument,
                    "ingest_frames: " + std::to_string(frames.size()) + " frames exceed the chunk size " +
                        std::to_string(m_config.max_ingest));
    }
    std::size_t total = 0;
    std::optional<std::int64_t> last = m_last_frame;
    for (const FrameTokens& f : frames) {
        if (last && f.frame_idx <= *last) {
            throw Error(ErrorCode::invalid_argument,
                        "ingest_frames: frame " + std::to_string(f.frame_idx) + " does not follow frame " +
                            std::to_string(*last));
        }
        last = f.frame_idx;
        total += f.size();
    }
    if (!fresh_mass.empty() && fresh_mass.size() != total) {
        throw Error(ErrorCode::index_misalignment,
                    "ingest_frames: " + std::to_string(fresh_mass.size()) + " scores for " + std::to_string(total) +
                        " tokens");
    }

    std::size_t offset = 0;
    for (const FrameTokens& f : frames) {
        WindowFrame wf{f.frame_idx, {}};
        wf.tokens.reserve(f.size());
        for (std::size_t i = 0; i < f.size(); ++i) {
            const double score = fresh_mass.empty() ? 0.0 : fresh_mass[offset + i];
            wf.tokens.push_back(make_token(f, i, score, Origin::window));
        }
        offset += f.size();
        m_window.push_back(std::move(wf));
    }
    m_last_frame = last;

    std::vector<CachedToken> expelled;
    while (m_window.size() > m_config.window_frames) {
        auto& oldest = m_window.front().tokens;
        std::move(oldest.begin(), oldest.end(), std::back_inserter(expelled));
        m_window.pop_front();
    }
    return expelled;
}

void TemporalCache::update_scores(std::span<const double> mass) {
    if (mass.size() != size()) {
        throw Error(ErrorCode::index_misalignment,
                    "update_scores: " + std::to_string(mass.size()) + " mass entries for " + std::to_string(size()) +
                        " cached tokens");
    }
    std::size_t i = 0;
    auto apply = [&](CachedToken& t) {
        t.score = m_config.gamma * t.score + mass[i++];
    };
    std::for_each(m_reference.begin(), m_reference.end(), apply);
    for (auto& wf : m_window) {
        std::for_each(wf.tokens.begin(), wf.tokens.end(), apply);
    }
    std::for_each(m_anchors.begin(), m_anchors.end(), apply);
}

std::vector<CachedToken> TemporalCache::select_anchors(std::vector<CachedToken> expelled) {
    std::vector<CachedToken> candidates = std::move(m_anchors);
    m_anchors.clear();
    std::move(expelled.begin(), expelled.end(), std::back_inserter(candidates));
    std::sort(candidates.begin(), candidates.end(), anchor_rank_before);

    const std::size_t keep = std::min(candidates.size(), m_config.anchor_budget);
    auto split = candidates.begin() + static_cast<std::ptrdiff_t>(keep);
    m_anchors.assign(std::make_move_iterator(candidates.begin()), std::make_move_iterator(split));
    for (auto& a : m_anchors) {
        a.origin = Origin::anchor;
    }
    return {std::make_move_iterator(split), std::make_move_iterator(candidates.end())};
}

void TemporalCache::for_each(const std::function<void(const CachedToken&)>& fn) const {
    std::for_each(m_reference.begin(), m_reference.end(), fn);
    for (const auto& wf : m_window) {
        std::for_each(wf.tokens.begin(), wf.tokens.end(), fn);
    }
    std::for_each(m_anchors.begin(), m_anchors.end(), fn);
}

std::vector<CachedToken> TemporalCache::snapshot() const {
    std::vector<CachedToken> out;
    out.reserve(size());
    for_each([&](const CachedToken& t) { out.push_back(t); });
    return out;
}

std::size_t TemporalCache::window_token_count() const noexcept {
    std::size_t n = 0;
    for (const auto& wf : m_window) {
        n += wf.tokens.size();
    }
    return n;
}

std::size_t TemporalCache::size() const noexcept {
    return m_reference.size() + window_token_count() + m_anchors.size();
}

}  // namespace stcache
