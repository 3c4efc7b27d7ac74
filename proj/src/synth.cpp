// Copyright (C) 2026 The stcache Authors
// SPDX-License-Identifier: Apache-2.0

#include "stcache/synth.hpp"

#include <cmath>

#include "json.hpp"
#include "stcache/error.hpp"

namespace stcache {

namespace {

Vec random_unit(std::mt19937_64& rng, std::size_t dim) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec v(dim);
    double norm2 = 0.0;
    do {
        norm2 = 0.0;
        for (double& x : v) {
            x = normal(rng);
            norm2 += x * x;
        }
    } while (norm2 == 0.0);
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& x : v) {
        x *= inv;
    }
    return v;
}

}  // namespace

const char* to_string(Motion motion) {
    switch (motion) {
    case Motion::random_walk:
        return "random_walk";
    case Motion::orbit:
        return "orbit";
    case Motion::revisit:
        return "revisit";
    }
    return "unknown";
}

Motion parse_motion(const std::string& name) {
    if (name == "random_walk") {
        return Motion::random_walk;
    }
    if (name == "orbit") {
        return Motion::orbit;
    }
    if (name == "revisit") {
        return Motion::revisit;
    }
    throw Error(ErrorCode::invalid_argument, "unknown motion '" + name + "' (expected random_walk|orbit|revisit)");
}

SynthGenerator::SynthGenerator(SynthParams params) : m_params(params) {
    if (params.frames < 0 || params.tokens < 1 || params.layers < 1 || params.heads < 1 || params.head_dim < 1 ||
        params.regions < 4 || params.visible_regions < 1 || params.camera_tokens < 0 ||
        params.camera_tokens >= params.tokens || !(params.voxel_size > 0.0) || params.spread < 0.0 ||
        params.sweep_frames < 1) {
        throw Error(ErrorCode::invalid_argument, "synth: invalid generator parameters");
    }
    m_params.regions = (params.regions + 3) / 4 * 4;
    m_params.visible_regions = std::min(params.visible_regions, m_params.regions);
    m_rng.seed(params.seed);

    const auto dim = static_cast<std::size_t>(params.head_dim);
    const std::int64_t channels = params.layers * params.heads;
    m_key_arch.resize(static_cast<std::size_t>(channels));
    m_value_arch.resize(static_cast<std::size_t>(channels));
    for (std::int64_t c = 0; c < channels; ++c) {
        for (std::int64_t r = 0; r <= m_params.regions; ++r) {
            m_key_arch[c].push_back(random_unit(m_rng, dim));
            m_value_arch[c].push_back(random_unit(m_rng, dim));
        }
    }

    const std::int64_t side = m_params.regions / 4;
    m_header.layers = params.layers;
    m_header.heads = params.heads;
    m_header.head_dim = params.head_dim;
    m_header.tokens_per_frame = params.tokens;
    m_header.frame_count = params.frames;
    m_header.has_positions = true;
    m_header.scene_extent.min = {0.0, 0.0, 0.0};
    m_header.scene_extent.max = {static_cast<double>(side + 1) * params.voxel_size,
                                 static_cast<double>(side + 1) * params.voxel_size, params.voxel_size};
    m_header.generator_seed = params.seed;
    nlohmann::ordered_json g;
    g["name"] = "stcache-synth";
    g["motion"] = to_string(params.motion);
    g["spread"] = params.spread;
    g["regions"] = m_params.regions;
    g["visible_regions"] = m_params.visible_regions;
    g["voxel_size"] = params.voxel_size;
    g["speed"] = params.speed;
    g["sweep_frames"] = params.sweep_frames;
    g["camera_tokens"] = params.camera_tokens;
    g["query_gain"] = params.query_gain;
    m_header.generator_json = g.dump();
}

std::array<std::int64_t, 3> SynthGenerator::region_cell(std::int64_t r) const {
    const std::int64_t side = m_params.regions / 4;
    r = ((r % m_params.regions) + m_params.regions) % m_params.regions;
    const std::int64_t leg = r / side;
    const std::int64_t pos = r % side;
    switch (leg) {
    case 0:
        return {pos, 0, 0};
    case 1:
        return {side, pos, 0};
    case 2:
        return {side - pos, side, 0};
    default:
        return {0, side - pos, 0};
    }
}

double SynthGenerator::camera_cell(std::int64_t t) {
    switch (m_params.motion) {
    case Motion::orbit:
        return m_params.speed * static_cast<double>(t);
    case Motion::revisit: {
        const std::int64_t period = 2 * m_params.sweep_frames;
        const std::int64_t phase = t % period;
        const std::int64_t along = phase < m_params.sweep_frames ? phase : period - phase;
        return m_params.speed * static_cast<double>(along);
    }
    case Motion::random_walk:
        break;
    }
    return m_walk;
}

std::optional<TraceRecord> SynthGenerator::next() {
    if (m_frame >= m_params.frames) {
        return std::nullopt;
    }
    const std::int64_t t = m_frame++;
    if (m_params.motion == Motion::random_walk && t > 0) {
        std::uniform_real_distribution<double> step(-1.5, 1.5);
        m_walk += m_params.speed * step(m_rng);
    }

    const auto dim = static_cast<std::size_t>(m_params.head_dim);
    const auto n = static_cast<std::size_t>(m_params.tokens);
    const std::int64_t base = static_cast<std::int64_t>(std::llround(camera_cell(t))) - m_params.visible_regions / 2;
    const double vs = m_params.voxel_size;

    std::uniform_real_distribution<double> jitter(-0.45, 0.45);
    std::normal_distribution<double> noise(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));

    TraceRecord rec;
    rec.frame_idx = t;
    std::vector<std::int64_t> region(n);
    rec.positions.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        const auto cam = static_cast<std::size_t>(m_params.camera_tokens);
        if (j < cam) {
            region[j] = m_params.regions;  // camera archetype
            continue;
        }
        const std::int64_t r = base + static_cast<std::int64_t>((j - cam) % static_cast<std::size_t>(m_params.visible_regions));
        region[j] = ((r % m_params.regions) + m_params.regions) % m_params.regions;
        const auto cell = region_cell(region[j]);
        rec.positions[j] = Point3{(static_cast<double>(cell[0]) + 0.5 + jitter(m_rng)) * vs,
                                  (static_cast<double>(cell[1]) + 0.5 + jitter(m_rng)) * vs,
                                  (static_cast<double>(cell[2]) + 0.5 + jitter(m_rng)) * vs};
    }

    // Logit of a query against its own region's archetype is about 2 * query_gain.
    const double key_scale = std::sqrt(2.0 * std::sqrt(static_cast<double>(dim)));
    const std::int64_t channels = m_params.layers * m_params.heads;
    rec.channels.resize(static_cast<std::size_t>(channels));
    for (std::int64_t c = 0; c < channels; ++c) {
        ChannelTensors& ct = rec.channels[static_cast<std::size_t>(c)];
        ct.q.resize(n * dim);
        ct.k.resize(n * dim);
        ct.v.resize(n * dim);
        const auto& karch = m_key_arch[static_cast<std::size_t>(c)];
        const auto& varch = m_value_arch[static_cast<std::size_t>(c)];
        for (std::size_t j = 0; j < n; ++j) {
            const auto r = static_cast<std::size_t>(region[j]);
            const bool camera = region[j] == m_params.regions;
            const auto prev = camera ? r : static_cast<std::size_t>((region[j] + m_params.regions - 1) % m_params.regions);
            const auto nextr = camera ? r : static_cast<std::size_t>((region[j] + 1) % m_params.regions);
            for (std::size_t d = 0; d < dim; ++d) {
                ct.k[j * dim + d] = key_scale * (karch[r][d] + m_params.spread * noise(m_rng));
                ct.v[j * dim + d] = key_scale * (varch[r][d] + m_params.spread * noise(m_rng));
                const double target = camera ? karch[r][d] : karch[r][d] + 0.5 * karch[prev][d] + 0.5 * karch[nextr][d];
                ct.q[j * dim + d] = m_params.query_gain * key_scale * (target + 0.5 * noise(m_rng));
            }
        }
    }
    return rec;
}

SynthTrace synth_trace(const SynthParams& params) {
    SynthGenerator gen(params);
    SynthTrace out{gen.header(), {}};
    while (auto r = gen.next()) {
        out.records.push_back(std::move(*r));
    }
    return out;
}

}  // namespace stcache
