// Copyright (C) 2026 The stcache Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "stcache/trace_io.hpp"

namespace stcache {

enum class Motion { random_walk, orbit, revisit };

const char* to_string(Motion motion);
/// Throws ErrorCode::invalid_argument for unknown names.
Motion parse_motion(const std::string& name);

struct SynthParams {
    std::uint64_t seed = 7;
    std::int64_t frames = 100;
    std::int64_t tokens = 32;
    std::int64_t layers = 2;
    std::int64_t heads = 2;
    std::int64_t head_dim = 16;
    Motion motion = Motion::revisit;
    double spread = 0.3;  ///< key/value noise relative to the region archetype

    // Scene. Regions are single voxels laid out on a square loop in the z = 0 voxel layer.
    std::int64_t regions = 48;          ///< rounded up to a multiple of 4
    std::int64_t visible_regions = 8;   ///< contiguous loop segment seen by each frame
    double voxel_size = 0.05;
    double speed = 0.5;                 ///< loop cells advanced per frame
    std::int64_t sweep_frames = 40;     ///< revisit: frames per sweep before turning back
    std::int64_t camera_tokens = 1;     ///< positionless tokens at the start of every frame
    double query_gain = 2.0;
};

/**
 * Seeded synthetic trace source with spatial structure.
 *
 * Each region owns a random key and value archetype per (layer, head). A token observed in a
 * region gets the archetype plus noise scaled by `spread`, so tokens from the same voxel are
 * cosine-similar. Queries point at the token's own region and, with half weight, its two loop
 * neighbors. Positions are jittered inside the region's voxel, which keeps the set of active
 * voxels bounded by `regions`.
 */
class SynthGenerator {
public:
    explicit SynthGenerator(SynthParams params);

    const TraceHeader& header() const noexcept {
        return m_header;
    }
    const SynthParams& params() const noexcept {
        return m_params;
    }

    std::optional<TraceRecord> next();

    /// Loop position (in cells) of the camera at frame t.
    double camera_cell(std::int64_t t);
    /// Voxel index of region r.
    std::array<std::int64_t, 3> region_cell(std::int64_t r) const;

private:
    SynthParams m_params;
    TraceHeader m_header;
    std::mt19937_64 m_rng;
    std::vector<std::vector<Vec>> m_key_arch;    ///< [channel][region + camera]
    std::vector<std::vector<Vec>> m_value_arch;
    std::int64_t m_frame = 0;
    double m_walk = 0.0;
};

struct SynthTrace {
    TraceHeader header;
    std::vector<TraceRecord> records;
};

SynthTrace synth_trace(const SynthParams& params);

}  // namespace stcache
