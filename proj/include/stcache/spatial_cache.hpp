// Copyright (C) 2026 The stcache Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "stcache/morton.hpp"
#include "stcache/token.hpp"

namespace stcache {

struct SpatialConfig {
    double voxel_size = 0.05;
    double lambda = 0.8;
    std::size_t g_cap = 4;
    std::size_t e_cap = 8;
    double knn_radius_mult = 2.0;
    bool half_precision = false;
};

/// A token resident in a voxel, tagged with its store-wide insertion sequence number.
struct StoredToken {
    CachedToken token;
    std::uint64_t seq = 0;
};

/// Dual buffer of one voxel: merged long-term representatives and recently evicted originals.
struct VoxelCell {
    std::vector<StoredToken> long_term;
    std::vector<StoredToken> buffer;

    std::size_t size() const noexcept {
        return long_term.size() + buffer.size();
    }
};

enum class InsertEvent : std::uint8_t { fused, buffered, aggregated, dropped };

const char* to_string(InsertEvent event);

struct StoreCounters {
    std::uint64_t fused = 0;
    std::uint64_t buffered = 0;
    std::uint64_t aggregated = 0;
    std::uint64_t re_merged = 0;
    std::uint64_t dropped = 0;
    std::uint64_t saturated = 0;  ///< half-precision entries clamped
};

/// Exp of the key cosine, with degenerate (zero-norm) keys treated as similarity -1.
double fusion_weight(const CachedToken& a, const CachedToken& b) noexcept;

/// Tokens returned by retrieve(), split by class.
struct Retrieval {
    std::vector<CachedToken> tokens;  ///< long-term first, then buffered
    std::size_t long_term = 0;
    std::size_t buffered = 0;
};

/**
 * Voxel-indexed long-term memory for one (layer, head).
 *
 * Evicted tokens are bucketed by position. Inside a voxel an incoming token either fuses into
 * its most key-similar representative (cosine > lambda) or waits in the buffer; a full buffer
 * collapses into one new representative around its highest-score member, and a full
 * representative set compacts by folding its lightest member into its nearest neighbor.
 */
class VoxelStore {
public:
    explicit VoxelStore(SpatialConfig config);

    const SpatialConfig& config() const noexcept {
        return m_config;
    }

    InsertEvent insert_evicted(CachedToken token);

    /// Collapses a full buffer into a new representative. Requires |buffer| == e_cap.
    void aggregate(const VoxelCoord& u);

    /// Frees one representative slot. Requires |long_term| == g_cap and g_cap >= 2.
    void re_merge(const VoxelCoord& u);

    /**
     * Tokens from every active cell whose center lies within knn_radius_mult * voxel_size of a
     * visible voxel center. Long-term tokens come first, then buffered ones; within a class the
     * order is (distance to nearest visible voxel, Z descending, insertion order). At most
     * `quota` tokens are returned.
     */
    Retrieval retrieve(std::span<const Point3> visible_positions, std::size_t quota) const;

    const VoxelCell* cell(const VoxelCoord& u) const;
    const std::map<std::uint64_t, VoxelCell>& cells() const noexcept {
        return m_cells;
    }

    std::size_t active_cells() const noexcept {
        return m_cells.size();
    }
    std::size_t token_count() const noexcept;
    /// Original tokens represented (sum of counts).
    std::int64_t represented_count() const noexcept;
    const StoreCounters& counters() const noexcept {
        return m_counters;
    }
    /// hist[k] = number of active cells holding k tokens, k in [0, g_cap + e_cap].
    std::vector<std::size_t> occupancy_histogram() const;

    /// Visits (coord, cell) pairs in Morton order.
    template <typename Fn>
    void for_each_cell(Fn&& fn) const {
        for (const auto& [code, c] : m_cells) {
            fn(morton_decode(code), c);
        }
    }

private:
    VoxelCell& cell_at(const VoxelCoord& u);
    void quantize(CachedToken& t);
    TokenId next_merged_id() noexcept;

    SpatialConfig m_config;
    std::map<std::uint64_t, VoxelCell> m_cells;
    std::vector<VoxelCoord> m_offsets;  ///< neighborhood stencil, in voxel units
    StoreCounters m_counters;
    std::uint64_t m_next_seq = 0;
    std::int64_t m_next_merged = 0;
};

/// Weighted fusion: target <- (Z*target + w*other) / (Z + w) for key, value and position; Z += w; counts add.
void fuse_into(CachedToken& target, const CachedToken& other, double w);

}  // namespace stcache
