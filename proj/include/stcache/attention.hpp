// Copyright (C) 2026 The stcache Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "stcache/numeric.hpp"

namespace stcache {

/// Boolean query x key mask, row-major. Columns are cached keys followed by current-chunk keys.
class AttentionMask {
public:
    AttentionMask() = default;
    AttentionMask(std::size_t rows, std::size_t cols, bool fill) : m_rows(rows), m_cols(cols), m_allowed(rows * cols, fill) {}

    std::size_t rows() const noexcept {
        return m_rows;
    }
    std::size_t cols() const noexcept {
        return m_cols;
    }
    bool allowed(std::size_t row, std::size_t col) const {
        return m_allowed[row * m_cols + col];
    }
    void set(std::size_t row, std::size_t col, bool value) {
        m_allowed[row * m_cols + col] = value;
    }
    bool all_allowed() const;

    /// Copy of one row, in the form masked_softmax expects.
    std::vector<bool> row(std::size_t r) const;

private:
    std::size_t m_rows = 0;
    std::size_t m_cols = 0;
    std::vector<bool> m_allowed;
};

/**
 * Chunk-causal mask: every cached key and every key of the current chunk is visible to every
 * query of the chunk. Causality is enforced by which keys are assembled, so the mask itself is
 * all-true with shape chunk_token_count x (cache_len + chunk_token_count).
 */
AttentionMask build_chunk_mask(std::size_t cache_len, std::size_t chunk_token_count);

/// Non-owning view of one attendable key/value pair.
struct KeyRef {
    const Vec* key = nullptr;
    const Vec* value = nullptr;
    std::int64_t count = 1;
};

struct AttentionResult {
    std::vector<Vec> outputs;  ///< one per query
    std::vector<double> mass;  ///< per key, attention summed over queries
};

/**
 * Scaled dot-product attention with a count bias.
 *
 * logit(j, i) = q_j . k_i / sqrt(d_h) + ln(n_i). Using the natural log makes a merged key with
 * count n attend exactly like n identical copies of itself.
 */
AttentionResult attend(std::span<const Vec> queries,
                       std::span<const KeyRef> keys,
                       const AttentionMask& mask,
                       std::size_t head_dim);

/// Convenience overload over owned arrays.
AttentionResult attend(std::span<const Vec> queries,
                       std::span<const Vec> keys,
                       std::span<const Vec> values,
                       std::span<const std::int64_t> counts,
                       const AttentionMask& mask,
                       std::size_t head_dim);

}  // namespace stcache
