// Copyright (C) 2026 The stcache Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace stcache {

/// Dense per-head feature vector. All arithmetic is carried out in double precision.
using Vec = std::vector<double>;

double dot(std::span<const double> a, std::span<const double> b);

/// Cosine similarity in [-1, 1]. Throws ErrorCode::degenerate_vector if either input has zero norm.
double cosine(std::span<const double> a, std::span<const double> b);

/// Like cosine(), but maps the degenerate case to -1 so that zero vectors never win a similarity argmax.
double cosine_or_min(std::span<const double> a, std::span<const double> b) noexcept;

/**
 * Numerically stable softmax restricted to the unmasked entries.
 *
 * Masked positions are excluded from both the running max and the normalizer and come out as exactly 0.
 * `mask[i] == true` means position i is allowed. An empty mask means "all allowed".
 */
std::vector<double> masked_softmax(std::span<const double> logits, const std::vector<bool>& mask = {});

/// sum_i w_i v_i / sum_i w_i. Weights must be strictly positive.
Vec weighted_mean(std::span<const Vec> vectors, std::span<const double> weights);

/// Largest finite IEEE-754 binary16 value.
inline constexpr double kHalfMax = 65504.0;

/// Round to the nearest binary16 value (ties to even) and widen back. Values beyond the half range
/// saturate to +-kHalfMax; `saturated` is set when that happens.
double half_roundtrip(double x, bool* saturated = nullptr) noexcept;

/// Element-wise half_roundtrip; returns the number of saturated entries.
std::size_t half_roundtrip_inplace(std::span<double> values) noexcept;

Vec half_roundtrip(std::span<const double> values);

}  // namespace stcache
