// Copyright (C) 2026 The stcache Authors
// SPDX-License-Identifier: Apache-2.0

#include "stcache/spatial_cache.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_map>

#include "stcache/error.hpp"

namespace stcache {

const char* to_string(InsertEvent event) {
    switch (event) {
    case InsertEvent::fused:
        return "fused";
    case InsertEvent::buffered:
        return "buffered";
    case InsertEvent::aggregated:
        return "aggregated";
    case InsertEvent::dropped:
        return "dropped";
    }
    return "unknown";
}

double fusion_weight(const CachedToken& a, const CachedToken& b) noexcept {
    return std::exp(cosine_or_min(a.key, b.key));
}

void fuse_into(CachedToken& target, const CachedToken& other, double w) {
    const double z = target.weight;
    const double total = z + w;
    for (std::size_t d = 0; d < target.key.size(); ++d) {
        target.key[d] = (z * target.key[d] + w * other.key[d]) / total;
    }
    for (std::size_t d = 0; d < target.value.size(); ++d) {
        target.value[d] = (z * target.value[d] + w * other.value[d]) / total;
    }
    if (target.position && other.position) {
        Point3& p = *target.position;
        const Point3& q = *other.position;
        p = {(z * p.x + w * q.x) / total, (z * p.y + w * q.y) / total, (z * p.z + w * q.z) / total};
    }
    target.weight = total;
    target.count += other.count;
    target.score = std::max(target.score, other.score);
    target.origin = Origin::merged;
}

VoxelStore::VoxelStore(SpatialConfig config) : m_config(config) {
    if (!(config.voxel_size > 0.0) || config.g_cap < 1 || config.e_cap < 1 || !(config.knn_radius_mult >= 0.0)) {
        throw Error(ErrorCode::config, "VoxelStore: invalid spatial configuration");
    }
    const double r2 = config.knn_radius_mult * config.knn_radius_mult;
    const auto reach = static_cast<std::int64_t>(std::floor(config.knn_radius_mult));
    for (std::int64_t dx = -reach; dx <= reach; ++dx) {
        for (std::int64_t dy = -reach; dy <= reach; ++dy) {
            for (std::int64_t dz = -reach; dz <= reach; ++dz) {
                if (static_cast<double>(dx * dx + dy * dy + dz * dz) <= r2) {
                    m_offsets.push_back({dx, dy, dz});
                }
            }
        }
    }
}

VoxelCell& VoxelStore::cell_at(const VoxelCoord& u) {
    return m_cells[morton_encode(u)];
}

const VoxelCell* VoxelStore::cell(const VoxelCoord& u) const {
    auto it = m_cells.find(morton_encode(u));
    return it == m_cells.end() ? nullptr : &it->second;
}

void VoxelStore::quantize(CachedToken& t) {
    if (m_config.half_precision) {
        m_counters.saturated += half_roundtrip_inplace(t.key);
        m_counters.saturated += half_roundtrip_inplace(t.value);
    }
}

TokenId VoxelStore::next_merged_id() noexcept {
    return TokenId{TokenId::kMergedFrame, m_next_merged++};
}

InsertEvent VoxelStore::insert_evicted(CachedToken token) {
    if (!token.position) {
        ++m_counters.dropped;
        return InsertEvent::dropped;
    }
    if (token.count != 1) {
        throw Error(ErrorCode::invalid_argument, "insert_evicted: only original (count 1) tokens can be evicted");
    }
    const VoxelCoord u = voxel_of(*token.position, m_config.voxel_size);
    VoxelCell& c = cell_at(u);

    // Most key-similar representative; G is kept in insertion order so ties go to the oldest.
    StoredToken* best = nullptr;
    double best_cos = -std::numeric_limits<double>::infinity();
    for (auto& rep : c.long_term) {
        const double s = cosine_or_min(token.key, rep.token.key);
        if (s > best_cos) {
            best_cos = s;
            best = &rep;
        }
    }
    if (best != nullptr && best_cos > m_config.lambda) {
        fuse_into(best->token, token, std::exp(best_cos));
        quantize(best->token);
        ++m_counters.fused;
        return InsertEvent::fused;
    }

    token.origin = Origin::buffered;
    token.weight = 1.0;
    c.buffer.push_back(StoredToken{std::move(token), m_next_seq++});
    if (c.buffer.size() >= m_config.e_cap) {
        aggregate(u);
        return InsertEvent::aggregated;
    }
    ++m_counters.buffered;
    return InsertEvent::buffered;
}

void VoxelStore::aggregate(const VoxelCoord& u) {
    auto it = m_cells.find(morton_encode(u));
    if (it == m_cells.end() || it->second.buffer.size() != m_config.e_cap) {
        throw Error(ErrorCode::state, "aggregate: buffer is not at capacity");
    }
    VoxelCell& c = it->second;

    // Stable argmax: the earliest buffered token wins ties.
    std::size_t pivot = 0;
    for (std::size_t i = 1; i < c.buffer.size(); ++i) {
        if (c.buffer[i].token.score > c.buffer[pivot].token.score) {
            pivot = i;
        }
    }
    const CachedToken& q = c.buffer[pivot].token;

    std::vector<Vec> keys;
    std::vector<Vec> values;
    std::vector<double> weights;
    keys.reserve(c.buffer.size());
    values.reserve(c.buffer.size());
    weights.reserve(c.buffer.size());
    std::int64_t count = 0;
    double total = 0.0;
    Point3 pos;
    for (const auto& m : c.buffer) {
        const double w = fusion_weight(m.token, q);
        keys.push_back(m.token.key);
        values.push_back(m.token.value);
        weights.push_back(w);
        count += m.token.count;
        total += w;
        const Point3& p = *m.token.position;
        pos.x += w * p.x;
        pos.y += w * p.y;
        pos.z += w * p.z;
    }

    CachedToken merged;
    merged.id = next_merged_id();
    merged.key = weighted_mean(keys, weights);
    merged.value = weighted_mean(values, weights);
    merged.score = q.score;
    merged.position = Point3{pos.x / total, pos.y / total, pos.z / total};
    merged.count = count;
    merged.weight = total;
    merged.origin = Origin::merged;
    c.buffer.clear();
    ++m_counters.aggregated;

    if (c.long_term.size() >= m_config.g_cap) {
        if (m_config.g_cap == 1) {
            // No neighbor to absorb the victim: fold the old representative into the incoming one.
            const CachedToken& old = c.long_term.front().token;
            fuse_into(merged, old, fusion_weight(old, merged));
            c.long_term.clear();
            ++m_counters.re_merged;
        } else {
            re_merge(u);
        }
    }
    quantize(merged);
    c.long_term.push_back(StoredToken{std::move(merged), m_next_seq++});
}

void VoxelStore::re_merge(const VoxelCoord& u) {
    auto it = m_cells.find(morton_encode(u));
    if (it == m_cells.end() || it->second.long_term.size() != m_config.g_cap || m_config.g_cap < 2) {
        throw Error(ErrorCode::state, "re_merge: long-term set is not at capacity (or g_cap < 2)");
    }
    auto& g = it->second.long_term;

    std::size_t victim = 0;
    for (std::size_t i = 1; i < g.size(); ++i) {
        if (g[i].token.weight < g[victim].token.weight) {
            victim = i;
        }
    }
    std::size_t neighbor = g.size();
    double best_cos = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (i == victim) {
            continue;
        }
        const double s = cosine_or_min(g[victim].token.key, g[i].token.key);
        if (s > best_cos) {
            best_cos = s;
            neighbor = i;
        }
    }
    fuse_into(g[neighbor].token, g[victim].token, std::exp(best_cos));
    quantize(g[neighbor].token);
    g.erase(g.begin() + static_cast<std::ptrdiff_t>(victim));
    ++m_counters.re_merged;
}

Retrieval VoxelStore::retrieve(std::span<const Point3> visible_positions, std::size_t quota) const {
    Retrieval out;
    if (quota == 0 || m_cells.empty() || visible_positions.empty()) {
        return out;
    }
    std::vector<VoxelCoord> visible;
    visible.reserve(visible_positions.size());
    for (const Point3& p : visible_positions) {
        visible.push_back(voxel_of(p, m_config.voxel_size));
    }
    std::sort(visible.begin(), visible.end());
    visible.erase(std::unique(visible.begin(), visible.end()), visible.end());

    // Squared center distance in voxel units, which is exact for integer offsets.
    auto dist2 = [](const VoxelCoord& a, const VoxelCoord& b) {
        const std::int64_t dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
        return dx * dx + dy * dy + dz * dz;
    };
    const double r2 = m_config.knn_radius_mult * m_config.knn_radius_mult;

    std::unordered_map<std::uint64_t, std::int64_t> nearest;  // Morton code -> min squared distance
    if (m_offsets.size() * visible.size() <= m_cells.size() * 4) {
        for (const VoxelCoord& v : visible) {
            for (const VoxelCoord& o : m_offsets) {
                const VoxelCoord n{v.x + o.x, v.y + o.y, v.z + o.z};
                if (!in_morton_range(n)) {
                    continue;
                }
                const std::uint64_t code = morton_encode(n);
                if (m_cells.count(code) == 0) {
                    continue;
                }
                const std::int64_t d = o.x * o.x + o.y * o.y + o.z * o.z;
                auto [pos, inserted] = nearest.emplace(code, d);
                if (!inserted && d < pos->second) {
                    pos->second = d;
                }
            }
        }
    } else {
        for (const auto& [code, c] : m_cells) {
            const VoxelCoord u = morton_decode(code);
            std::int64_t best = std::numeric_limits<std::int64_t>::max();
            for (const VoxelCoord& v : visible) {
                best = std::min(best, dist2(u, v));
            }
            if (static_cast<double>(best) <= r2) {
                nearest.emplace(code, best);
            }
        }
    }

    struct Candidate {
        std::int64_t dist2;
        double weight;
        std::uint64_t seq;
        const CachedToken* token;
    };
    std::vector<Candidate> g_candidates;
    std::vector<Candidate> e_candidates;
    for (const auto& [code, d] : nearest) {
        const VoxelCell& c = m_cells.at(code);
        for (const auto& s : c.long_term) {
            g_candidates.push_back({d, s.token.weight, s.seq, &s.token});
        }
        for (const auto& s : c.buffer) {
            e_candidates.push_back({d, s.token.weight, s.seq, &s.token});
        }
    }
    auto rank = [](const Candidate& a, const Candidate& b) {
        if (a.dist2 != b.dist2) {
            return a.dist2 < b.dist2;
        }
        if (a.weight != b.weight) {
            return a.weight > b.weight;
        }
        return a.seq < b.seq;
    };
    std::sort(g_candidates.begin(), g_candidates.end(), rank);
    std::sort(e_candidates.begin(), e_candidates.end(), rank);

    for (const auto& cand : g_candidates) {
        if (out.tokens.size() == quota) {
            break;
        }
        out.tokens.push_back(*cand.token);
        ++out.long_term;
    }
    for (const auto& cand : e_candidates) {
        if (out.tokens.size() == quota) {
            break;
        }
        out.tokens.push_back(*cand.token);
        ++out.buffered;
    }
    return out;
}

std::size_t VoxelStore::token_count() const noexcept {
    std::size_t n = 0;
    for (const auto& [code, c] : m_cells) {
        n += c.size();
    }
    return n;
}

std::int64_t VoxelStore::represented_count() const noexcept {
    std::int64_t n = 0;
    for (const auto& [code, c] : m_cells) {
        for (const auto& s : c.long_term) {
            n += s.token.count;
        }
        for (const auto& s : c.buffer) {
            n += s.token.count;
        }
    }
    return n;
}

std::vector<std::size_t> VoxelStore::occupancy_histogram() const {
    std::vector<std::size_t> hist(m_config.g_cap + m_config.e_cap + 1, 0);
    for (const auto& [code, c] : m_cells) {
        ++hist[std::min(c.size(), hist.size() - 1)];
    }
    return hist;
}

}  // namespace stcache
