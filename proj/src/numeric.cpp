// Copyright (C) 2026 The stcache Authors
// SPDX-License-Identifier: Apache-2.0

#include "stcache/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "stcache/error.hpp"

namespace stcache {

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* op) {
    if (a != b) {
        throw Error(ErrorCode::dimension,
                    std::string(op) + ": length mismatch (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
    }
}

}  // namespace

double dot(std::span<const double> a, std::span<const double> b) {
    require_same_length(a.size(), b.size(), "dot");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += a[i] * b[i];
    }
    return acc;
}

double cosine(std::span<const double> a, std::span<const double> b) {
    require_same_length(a.size(), b.size(), "cosine");
    const double aa = dot(a, a);
    const double bb = dot(b, b);
    if (aa == 0.0 || bb == 0.0) {
        throw Error(ErrorCode::degenerate_vector, "cosine: zero-norm input");
    }
    // sqrt(aa * bb) rather than sqrt(aa) * sqrt(bb): for a == b this is exactly aa, giving 1.0.
    const double c = dot(a, b) / std::sqrt(aa * bb);
    return std::clamp(c, -1.0, 1.0);
}

double cosine_or_min(std::span<const double> a, std::span<const double> b) noexcept {
    if (a.size() != b.size()) {
        return -1.0;
    }
    const double aa = dot(a, a);
    const double bb = dot(b, b);
    if (aa == 0.0 || bb == 0.0) {
        return -1.0;
    }
    return std::clamp(dot(a, b) / std::sqrt(aa * bb), -1.0, 1.0);
}

std::vector<double> masked_softmax(std::span<const double> logits, const std::vector<bool>& mask) {
    const bool all_allowed = mask.empty();
    if (!all_allowed) {
        require_same_length(logits.size(), mask.size(), "masked_softmax");
    }
    std::vector<double> out(logits.size(), 0.0);

    double max_logit = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (all_allowed || mask[i]) {
            max_logit = any ? std::max(max_logit, logits[i]) : logits[i];
            any = true;
        }
    }
    if (!any) {
        throw Error(ErrorCode::empty_support, "masked_softmax: every entry is masked");
    }

    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (all_allowed || mask[i]) {
            out[i] = std::exp(logits[i] - max_logit);
            total += out[i];
        }
    }
    for (double& p : out) {
        p /= total;
    }
    return out;
}

Vec weighted_mean(std::span<const Vec> vectors, std::span<const double> weights) {
    if (vectors.empty()) {
        throw Error(ErrorCode::invalid_argument, "weighted_mean: empty input");
    }
    require_same_length(vectors.size(), weights.size(), "weighted_mean");
    const std::size_t dim = vectors.front().size();
    Vec acc(dim, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        if (!(weights[i] > 0.0)) {
            throw Error(ErrorCode::invalid_argument, "weighted_mean: weights must be positive");
        }
        require_same_length(dim, vectors[i].size(), "weighted_mean");
        for (std::size_t d = 0; d < dim; ++d) {
            acc[d] += weights[i] * vectors[i][d];
        }
        total += weights[i];
    }
    for (double& x : acc) {
        x /= total;
    }
    return acc;
}

double half_roundtrip(double x, bool* saturated) noexcept {
    if (saturated) {
        *saturated = false;
    }
    if (x == 0.0 || std::isnan(x)) {
        return x;
    }
    const double mag = std::fabs(x);
    if (mag > kHalfMax) {
        if (saturated) {
            *saturated = true;
        }
        return std::copysign(kHalfMax, x);
    }
    // binary16: 10 fraction bits, minimum normal exponent -14, subnormal quantum 2^-24.
    const int exponent = std::max(std::ilogb(mag), -14);
    const double quantum = std::ldexp(1.0, exponent - 10);
    // Scaling by a power of two is exact; nearbyint uses the default round-to-nearest-even mode.
    const double rounded = std::nearbyint(mag / quantum) * quantum;
    return std::copysign(rounded, x);
}

std::size_t half_roundtrip_inplace(std::span<double> values) noexcept {
    std::size_t saturated = 0;
    for (double& v : values) {
        bool sat = false;
        v = half_roundtrip(v, &sat);
        saturated += sat ? 1 : 0;
    }
    return saturated;
}

Vec half_roundtrip(std::span<const double> values) {
    Vec out(values.begin(), values.end());
    half_roundtrip_inplace(out);
    return out;
}

}  // namespace stcache
