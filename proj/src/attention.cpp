// Copyright (C) 2026 The stcache Authors
// SPDX-License-Identifier: Apache-2.0

#include "stcache/attention.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stcache/error.hpp"

namespace stcache {

bool AttentionMask::all_allowed() const {
    return std::all_of(m_allowed.begin(), m_allowed.end(), [](bool b) { return b; });
}

std::vector<bool> AttentionMask::row(std::size_t r) const {
    auto first = m_allowed.begin() + static_cast<std::ptrdiff_t>(r * m_cols);
    return {first, first + static_cast<std::ptrdiff_t>(m_cols)};
}

AttentionMask build_chunk_mask(std::size_t cache_len, std::size_t chunk_token_count) {
    if (chunk_token_count == 0) {
        throw Error(ErrorCode::invalid_argument, "build_chunk_mask: empty chunk");
    }
    return AttentionMask(chunk_token_count, cache_len + chunk_token_count, true);
}

AttentionResult attend(std::span<const Vec> queries,
                       std::span<const KeyRef> keys,
                       const AttentionMask& mask,
                       std::size_t head_dim) {
    if (keys.empty()) {
        throw Error(ErrorCode::invalid_argument, "attend: empty key set");
    }
    if (mask.rows() != queries.size() || mask.cols() != keys.size()) {
        throw Error(ErrorCode::dimension,
                    "attend: mask is " + std::to_string(mask.rows()) + "x" + std::to_string(mask.cols()) +
                        ", expected " + std::to_string(queries.size()) + "x" + std::to_string(keys.size()));
    }
    std::vector<double> bias(keys.size());
    for (std::size_t i = 0; i < keys.size(); ++i) {
        const KeyRef& k = keys[i];
        if (k.key == nullptr || k.value == nullptr || k.key->size() != head_dim || k.value->size() != head_dim) {
            throw Error(ErrorCode::dimension, "attend: key/value " + std::to_string(i) + " has wrong head dimension");
        }
        if (k.count < 1) {
            throw Error(ErrorCode::invalid_argument, "attend: counts must be positive");
        }
        bias[i] = std::log(static_cast<double>(k.count));
    }

    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
    const bool dense = mask.all_allowed();
    const std::vector<bool> no_mask;

    AttentionResult result;
    result.outputs.assign(queries.size(), Vec(head_dim, 0.0));
    result.mass.assign(keys.size(), 0.0);

    std::vector<double> logits(keys.size());
    for (std::size_t j = 0; j < queries.size(); ++j) {
        if (queries[j].size() != head_dim) {
            throw Error(ErrorCode::dimension, "attend: query " + std::to_string(j) + " has wrong head dimension");
        }
        for (std::size_t i = 0; i < keys.size(); ++i) {
            logits[i] = dot(queries[j], *keys[i].key) * scale + bias[i];
        }
        const std::vector<double> weights = dense ? masked_softmax(logits, no_mask) : masked_softmax(logits, mask.row(j));
        Vec& out = result.outputs[j];
        for (std::size_t i = 0; i < keys.size(); ++i) {
            const double w = weights[i];
            if (w == 0.0) {
                continue;
            }
            const Vec& v = *keys[i].value;
            for (std::size_t d = 0; d < head_dim; ++d) {
                out[d] += w * v[d];
            }
            result.mass[i] += w;
        }
    }
    return result;
}

AttentionResult attend(std::span<const Vec> queries,
                       std::span<const Vec> keys,
                       std::span<const Vec> values,
                       std::span<const std::int64_t> counts,
                       const AttentionMask& mask,
                       std::size_t head_dim) {
    if (keys.size() != values.size() || keys.size() != counts.size()) {
        throw Error(ErrorCode::dimension, "attend: keys, values and counts must be aligned");
    }
    std::vector<KeyRef> refs(keys.size());
    for (std::size_t i = 0; i < keys.size(); ++i) {
        refs[i] = KeyRef{&keys[i], &values[i], counts[i]};
    }
    return attend(queries, refs, mask, head_dim);
}

}  // namespace stcache
