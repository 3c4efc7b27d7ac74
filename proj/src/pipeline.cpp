// Copyright (C) 2026 The stcache Authors
// SPDX-License-Identifier: Apache-2.0

#include "stcache/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <thread>

#include "stcache/attention.hpp"
#include "stcache/error.hpp"

namespace stcache {

namespace {

template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> pool;
    const std::size_t workers = std::min(threads, n);
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

void invariant(bool ok, const std::string& what) {
    if (!ok) {
        throw Error(ErrorCode::invariant, "invariant violated: " + what);
    }
}

std::size_t score_bin(double score) {
    return static_cast<std::size_t>(std::upper_bound(kScoreBins.begin(), kScoreBins.end(), score) - kScoreBins.begin());
}

}  // namespace

const char* to_string(PolicyKind kind) {
    switch (kind) {
    case PolicyKind::full:
        return "full";
    case PolicyKind::window:
        return "window";
    case PolicyKind::stac:
        return "stac";
    }
    return "unknown";
}

PolicyKind parse_policy_kind(const std::string& name) {
    if (name == "full") {
        return PolicyKind::full;
    }
    if (name == "window") {
        return PolicyKind::window;
    }
    if (name == "stac") {
        return PolicyKind::stac;
    }
    throw Error(ErrorCode::config, "unknown policy '" + name + "' (expected full|window|stac)");
}

std::vector<std::string> validate_policy(const Policy& policy) {
    if (policy.kind == PolicyKind::stac) {
        return validate_config(policy.config);
    }
    std::vector<std::string> errors;
    if (policy.config.chunk_size < 1) {
        errors.emplace_back("chunk_size must be >= 1");
    }
    if (policy.kind == PolicyKind::window && policy.config.window_frames < 1) {
        errors.emplace_back("window_frames must be >= 1");
    }
    return errors;
}

BudgetAllocation allocate_budget(const CacheConfig& config, std::size_t tokens_per_frame) {
    const double total = config.budget_multiplier * static_cast<double>(tokens_per_frame);
    // The small epsilon keeps products like 0.25 * 8 * 100 from flooring to 199 through rounding.
    auto share = [&](double frac) { return static_cast<std::size_t>(std::floor(frac * total + 1e-9)); };
    BudgetAllocation b{share(config.window_frac), share(config.anchor_frac), share(config.retrieve_frac)};
    if (config.window_frames * tokens_per_frame > b.window_tokens) {
        throw Error(ErrorCode::config, "allocate_budget: a window of " + std::to_string(config.window_frames) +
                                           " frames needs " + std::to_string(config.window_frames * tokens_per_frame) +
                                           " tokens but its share is " + std::to_string(b.window_tokens));
    }
    return b;
}

StreamShape StreamShape::from_header(const TraceHeader& h) {
    return {static_cast<std::size_t>(h.layers), static_cast<std::size_t>(h.heads), static_cast<std::size_t>(h.head_dim),
            static_cast<std::size_t>(h.tokens_per_frame)};
}

EventCounts& EventCounts::operator+=(const EventCounts& o) noexcept {
    evicted += o.evicted;
    fused += o.fused;
    buffered += o.buffered;
    aggregated += o.aggregated;
    re_merged += o.re_merged;
    dropped += o.dropped;
    discarded += o.discarded;
    return *this;
}

struct StreamPipeline::Channel {
    TemporalCache temporal;
    std::optional<VoxelStore> store;
    std::int64_t produced = 0;
    std::uint64_t discarded = 0;
};

struct StreamPipeline::ChannelStep {
    std::vector<Vec> outputs;
    EventCounts events;
    std::size_t attended_keys = 0;
    std::size_t queries = 0;
    std::uint64_t retrieval_requested = 0;
    std::uint64_t retrieval_long_term = 0;
    std::uint64_t retrieval_buffered = 0;
    double spatial_mass = 0.0;
    double total_mass = 0.0;
    std::int64_t max_key_frame = std::numeric_limits<std::int64_t>::min();
    std::int64_t chunk_max_frame = 0;
};

StreamPipeline::StreamPipeline(StreamShape shape, Policy policy, PipelineOptions options)
    : m_shape(shape), m_policy(std::move(policy)), m_options(options) {
    if (shape.layers < 1 || shape.heads < 1 || shape.head_dim < 1 || shape.tokens_per_frame < 1) {
        throw Error(ErrorCode::invalid_argument, "StreamPipeline: every shape dimension must be >= 1");
    }
    const auto errors = validate_policy(m_policy);
    if (!errors.empty()) {
        std::string msg = "invalid cache configuration:";
        for (const auto& e : errors) {
            msg += " " + e + ";";
        }
        throw Error(ErrorCode::config, msg);
    }
    const CacheConfig& cfg = m_policy.config;
    TemporalCacheConfig tc;
    tc.gamma = cfg.gamma;
    tc.max_ingest = cfg.chunk_size;
    tc.half_precision = cfg.half_precision;
    switch (m_policy.kind) {
    case PolicyKind::full:
        tc.window_frames = std::numeric_limits<std::size_t>::max();
        break;
    case PolicyKind::window:
        tc.window_frames = cfg.window_frames;
        break;
    case PolicyKind::stac:
        m_budget = allocate_budget(cfg, shape.tokens_per_frame);
        tc.window_frames = cfg.window_frames;
        tc.anchor_budget = m_budget.anchor_tokens;
        break;
    }
    m_channels.reserve(shape.channels());
    for (std::size_t c = 0; c < shape.channels(); ++c) {
        Channel ch{TemporalCache(tc), std::nullopt, 0, 0};
        if (m_policy.kind == PolicyKind::stac) {
            ch.store.emplace(SpatialConfig{cfg.voxel_size, cfg.lambda, cfg.g_cap, cfg.e_cap, cfg.knn_radius_mult,
                                           cfg.half_precision});
        }
        m_channels.push_back(std::move(ch));
    }
}

StreamPipeline::~StreamPipeline() = default;
StreamPipeline::StreamPipeline(StreamPipeline&&) noexcept = default;
StreamPipeline& StreamPipeline::operator=(StreamPipeline&&) noexcept = default;

const TemporalCache& StreamPipeline::temporal(std::size_t channel) const {
    return m_channels.at(channel).temporal;
}

const VoxelStore* StreamPipeline::store(std::size_t channel) const {
    const auto& s = m_channels.at(channel).store;
    return s ? &*s : nullptr;
}

std::uint64_t StreamPipeline::saturated_entries() const {
    std::uint64_t n = 0;
    for (const auto& ch : m_channels) {
        n += ch.temporal.saturated_entries();
        if (ch.store) {
            n += ch.store->counters().saturated;
        }
    }
    return n;
}

StreamPipeline::ChannelStep StreamPipeline::run_channel(std::size_t c,
                                                        std::span<const TraceRecord> frames,
                                                        bool reference_chunk) {
    Channel& ch = m_channels[c];
    ChannelStep step;
    step.chunk_max_frame = frames.back().frame_idx;

    std::vector<FrameTokens> chunk;
    chunk.reserve(frames.size());
    std::vector<Vec> queries;
    for (const TraceRecord& r : frames) {
        chunk.push_back(r.frame_tokens(c, m_shape.head_dim));
        check_frame_shape(chunk.back(), m_shape.tokens_per_frame, m_shape.head_dim);
        queries.insert(queries.end(), chunk.back().queries.begin(), chunk.back().queries.end());
    }
    step.queries = queries.size();

    Retrieval spatial;
    if (ch.store && !reference_chunk) {
        std::vector<Point3> visible;
        for (const auto& f : chunk) {
            for (const auto& p : f.positions) {
                if (p) {
                    visible.push_back(*p);
                }
            }
        }
        step.retrieval_requested = m_budget.retrieve_tokens;
        spatial = ch.store->retrieve(visible, m_budget.retrieve_tokens);
        step.retrieval_long_term = spatial.long_term;
        step.retrieval_buffered = spatial.buffered;
    }

    std::vector<KeyRef> keys;
    keys.reserve(ch.temporal.size() + spatial.tokens.size() + queries.size());
    ch.temporal.for_each([&](const CachedToken& t) {
        keys.push_back({&t.key, &t.value, t.count});
        step.max_key_frame = std::max(step.max_key_frame, t.id.frame);
    });
    const std::size_t cached = keys.size();
    for (const auto& t : spatial.tokens) {
        keys.push_back({&t.key, &t.value, t.count});
        step.max_key_frame = std::max(step.max_key_frame, t.id.frame);
    }
    const std::size_t context = keys.size();
    for (const auto& f : chunk) {
        for (std::size_t i = 0; i < f.size(); ++i) {
            keys.push_back({&f.keys[i], &f.values[i], 1});
        }
        step.max_key_frame = std::max(step.max_key_frame, f.frame_idx);
    }
    step.attended_keys = keys.size();

    const AttentionMask mask = build_chunk_mask(context, queries.size());
    AttentionResult res = attend(queries, keys, mask, m_shape.head_dim);
    step.total_mass = std::accumulate(res.mass.begin(), res.mass.end(), 0.0);
    step.spatial_mass = std::accumulate(res.mass.begin() + static_cast<std::ptrdiff_t>(cached),
                                        res.mass.begin() + static_cast<std::ptrdiff_t>(context), 0.0);
    keys.clear();

    if (reference_chunk) {
        ch.temporal.register_reference(chunk.front());
    } else {
        const std::span<const double> mass(res.mass);
        ch.temporal.update_scores(mass.first(cached));
        auto expelled = ch.temporal.ingest_frames(chunk, mass.subspan(context));
        auto evicted = ch.temporal.select_anchors(std::move(expelled));
        step.events.evicted = evicted.size();
        for (auto& t : evicted) {
            if (!ch.store) {
                ++step.events.discarded;
                ++ch.discarded;
                continue;
            }
            switch (ch.store->insert_evicted(std::move(t))) {
            case InsertEvent::fused:
                ++step.events.fused;
                break;
            case InsertEvent::buffered:
                ++step.events.buffered;
                break;
            case InsertEvent::aggregated:
                ++step.events.aggregated;
                break;
            case InsertEvent::dropped:
                ++step.events.dropped;
                break;
            }
        }
    }
    ch.produced += static_cast<std::int64_t>(queries.size());
    if (m_options.keep_outputs) {
        step.outputs = std::move(res.outputs);
    }
    return step;
}

void StreamPipeline::audit_channel(std::size_t c, const ChannelStep& step) const {
    const Channel& ch = m_channels[c];
    const std::string where = " (channel " + std::to_string(c) + ")";
    const TemporalCache& t = ch.temporal;

    invariant(step.max_key_frame <= step.chunk_max_frame, "chunk-causality: a key from a later frame was assembled" + where);
    invariant(std::fabs(step.total_mass - static_cast<double>(step.queries)) <= 1e-9,
              "attention mass does not sum to the number of queries" + where);
    invariant(t.window_frame_count() <= t.config().window_frames, "window holds more frames than allowed" + where);
    invariant(t.anchor_count() <= t.config().anchor_budget, "anchor budget exceeded" + where);
    if (m_policy.kind == PolicyKind::stac) {
        invariant(t.window_token_count() + t.anchor_count() <= m_budget.window_tokens + m_budget.anchor_tokens,
                  "temporal budget exceeded" + where);
    }

    std::int64_t resident = static_cast<std::int64_t>(t.size());
    if (ch.store) {
        const SpatialConfig& sc = ch.store->config();
        ch.store->for_each_cell([&](const VoxelCoord&, const VoxelCell& cell) {
            invariant(cell.long_term.size() <= sc.g_cap, "voxel long-term capacity exceeded" + where);
            invariant(cell.buffer.size() < sc.e_cap, "voxel buffer not drained at capacity" + where);
            for (const auto& s : cell.long_term) {
                invariant(s.token.origin == Origin::merged && s.token.count >= 1 && s.token.weight >= 1.0,
                          "malformed long-term token" + where);
            }
            for (const auto& s : cell.buffer) {
                invariant(s.token.origin == Origin::buffered && s.token.count == 1, "malformed buffered token" + where);
            }
        });
        resident += ch.store->represented_count() + static_cast<std::int64_t>(ch.store->counters().dropped);
    }
    resident += static_cast<std::int64_t>(ch.discarded);
    invariant(resident == ch.produced, "token conservation: " + std::to_string(resident) + " accounted for, " +
                                           std::to_string(ch.produced) + " produced" + where);
}

ChunkReport StreamPipeline::process_chunk(std::span<const TraceRecord> frames) {
    const auto started = std::chrono::steady_clock::now();
    if (frames.empty()) {
        throw Error(ErrorCode::invalid_argument, "process_chunk: empty chunk");
    }
    const bool reference_chunk = !m_last_frame.has_value();
    if (reference_chunk && frames.size() != 1) {
        throw Error(ErrorCode::invalid_argument, "process_chunk: the first chunk must hold exactly the reference frame");
    }
    if (frames.size() > m_policy.config.chunk_size) {
        throw Error(ErrorCode::invalid_argument, "process_chunk: chunk larger than chunk_size");
    }
    const TraceHeader expected{kTraceVersion,
                               static_cast<std::int64_t>(m_shape.layers),
                               static_cast<std::int64_t>(m_shape.heads),
                               static_cast<std::int64_t>(m_shape.head_dim),
                               static_cast<std::int64_t>(m_shape.tokens_per_frame),
                               0,
                               true,
                               {},
                               std::nullopt,
                               {},
                               TraceEncoding::binary};
    std::optional<std::int64_t> prev = m_last_frame;
    for (const auto& r : frames) {
        validate_record(expected, r, m_frames_seen);
        if (prev && r.frame_idx != *prev + 1) {
            throw Error(ErrorCode::invalid_argument, "process_chunk: frame " + std::to_string(r.frame_idx) +
                                                         " does not directly follow frame " + std::to_string(*prev));
        }
        prev = r.frame_idx;
    }

    std::vector<ChannelStep> steps(m_channels.size());
    parallel_for(m_channels.size(), m_options.threads, [&](std::size_t c) {
        steps[c] = run_channel(c, frames, reference_chunk);
        if (m_options.audit) {
            audit_channel(c, steps[c]);
        }
    });
    m_last_frame = frames.back().frame_idx;
    m_frames_seen += static_cast<std::int64_t>(frames.size());

    ChunkReport rep;
    rep.chunk = m_chunks++;
    rep.first_frame = frames.front().frame_idx;
    rep.last_frame = frames.back().frame_idx;
    rep.frames = frames.size();
    std::array<double, 3> score_sum{};
    for (std::size_t c = 0; c < m_channels.size(); ++c) {
        const Channel& ch = m_channels[c];
        const ChannelStep& s = steps[c];
        const TemporalCache& t = ch.temporal;
        const std::size_t spatial = ch.store ? ch.store->token_count() : 0;
        rep.temporal_tokens = std::max(rep.temporal_tokens, t.size());
        rep.reference_tokens = std::max(rep.reference_tokens, t.reference_size());
        rep.window_tokens = std::max(rep.window_tokens, t.window_token_count());
        rep.anchor_tokens = std::max(rep.anchor_tokens, t.anchor_count());
        rep.spatial_tokens = std::max(rep.spatial_tokens, spatial);
        rep.active_cells = std::max(rep.active_cells, ch.store ? ch.store->active_cells() : 0);
        rep.total_tokens = std::max(rep.total_tokens, t.size() + spatial);
        rep.attended_keys = std::max(rep.attended_keys, s.attended_keys);
        rep.bytes += static_cast<std::uint64_t>(t.size() + spatial) * 2 * m_shape.head_dim * 2;
        rep.events += s.events;
        rep.retrieval_requested += s.retrieval_requested;
        rep.retrieval_long_term += s.retrieval_long_term;
        rep.retrieval_buffered += s.retrieval_buffered;
        rep.spatial_mass += s.spatial_mass;
        rep.total_mass += s.total_mass;

        std::array<double, 3> sum{};
        std::array<std::size_t, 3> n{};
        for (const auto& tok : t.reference()) {
            sum[0] += tok.score;
            ++n[0];
        }
        t.for_each([&](const CachedToken& tok) {
            if (tok.origin == Origin::window) {
                sum[1] += tok.score;
                ++n[1];
            }
        });
        for (const auto& tok : t.anchors()) {
            sum[2] += tok.score;
            ++n[2];
        }
        for (int k = 0; k < 3; ++k) {
            score_sum[k] += n[k] ? sum[k] / static_cast<double>(n[k]) : 0.0;
        }
        if (m_options.keep_outputs) {
            rep.outputs.push_back(std::move(steps[c].outputs));
        }
    }
    for (int k = 0; k < 3; ++k) {
        rep.mean_score[k] = score_sum[k] / static_cast<double>(m_channels.size());
    }
    rep.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    return rep;
}

RecordSource source_from(const std::vector<TraceRecord>& records) {
    auto index = std::make_shared<std::size_t>(0);
    return [&records, index]() -> std::optional<TraceRecord> {
        if (*index >= records.size()) {
            return std::nullopt;
        }
        return records[(*index)++];
    };
}

RecordSource source_from(TraceReader& reader) {
    return [&reader]() { return reader.next(); };
}

ChunkAssembler::ChunkAssembler(RecordSource source, std::size_t chunk_size)
    : m_source(std::move(source)), m_chunk_size(chunk_size) {
    if (chunk_size < 1) {
        throw Error(ErrorCode::config, "chunk_size must be >= 1");
    }
}

std::vector<TraceRecord> ChunkAssembler::next() {
    std::vector<TraceRecord> chunk;
    const std::size_t want = m_first ? 1 : m_chunk_size;
    while (chunk.size() < want) {
        auto r = m_source();
        if (!r) {
            break;
        }
        chunk.push_back(std::move(*r));
    }
    if (!chunk.empty()) {
        m_first = false;
    }
    return chunk;
}

namespace {

class SummaryBuilder {
public:
    SummaryBuilder(const Policy& policy, std::size_t tokens_per_frame) : m_tokens(tokens_per_frame) {
        m_summary.policy = to_string(policy.kind);
    }

    void add(const ChunkReport& rep) {
        ++m_summary.chunks;
        m_summary.frames += static_cast<std::int64_t>(rep.frames);
        m_summary.peak_total_tokens = std::max(m_summary.peak_total_tokens, rep.total_tokens);
        m_summary.peak_temporal_tokens = std::max(m_summary.peak_temporal_tokens, rep.temporal_tokens);
        m_summary.peak_spatial_tokens = std::max(m_summary.peak_spatial_tokens, rep.spatial_tokens);
        m_summary.peak_bytes = std::max(m_summary.peak_bytes, rep.bytes);
        m_summary.events += rep.events;
        m_wall += rep.wall_ms;
        m_spatial_mass += rep.spatial_mass;
        m_total_mass += rep.total_mass;
    }

    ReplaySummary finish(const StreamPipeline& p) {
        ReplaySummary s = m_summary;
        s.mean_chunk_ms = s.chunks ? m_wall / static_cast<double>(s.chunks) : 0.0;
        s.full_equivalent_tokens = static_cast<std::uint64_t>(s.frames) * m_tokens;
        s.full_ratio = s.peak_total_tokens
                           ? static_cast<double>(s.full_equivalent_tokens) / static_cast<double>(s.peak_total_tokens)
                           : 0.0;
        s.spatial_mass_fraction = m_total_mass > 0.0 ? m_spatial_mass / m_total_mass : 0.0;
        s.saturated_entries = p.saturated_entries();
        for (auto& row : s.score_histogram) {
            row.assign(kScoreBins.size() + 1, 0);
        }
        for (std::size_t c = 0; c < p.shape().channels(); ++c) {
            p.temporal(c).for_each([&](const CachedToken& t) {
                const int row = t.origin == Origin::reference ? 0 : t.origin == Origin::window ? 1 : 2;
                ++s.score_histogram[row][score_bin(t.score)];
            });
            if (const VoxelStore* store = p.store(c)) {
                const auto h = store->occupancy_histogram();
                if (s.occupancy_histogram.size() < h.size()) {
                    s.occupancy_histogram.resize(h.size(), 0);
                }
                for (std::size_t k = 0; k < h.size(); ++k) {
                    s.occupancy_histogram[k] += h[k];
                }
            }
        }
        return s;
    }

private:
    ReplaySummary m_summary;
    std::size_t m_tokens;
    double m_wall = 0.0;
    double m_spatial_mass = 0.0;
    double m_total_mass = 0.0;
};

}  // namespace

ReplayStats run_stream(const TraceHeader& header,
                       RecordSource source,
                       const Policy& policy,
                       PipelineOptions options,
                       const ChunkCallback& on_chunk) {
    StreamPipeline pipeline(StreamShape::from_header(header), policy, options);
    ChunkAssembler chunks(std::move(source), policy.config.chunk_size);
    SummaryBuilder summary(policy, pipeline.shape().tokens_per_frame);
    ReplayStats stats;
    for (auto chunk = chunks.next(); !chunk.empty(); chunk = chunks.next()) {
        ChunkReport rep = pipeline.process_chunk(chunk);
        if (on_chunk) {
            on_chunk(rep);
        }
        rep.outputs.clear();
        summary.add(rep);
        stats.chunks.push_back(std::move(rep));
    }
    stats.summary = summary.finish(pipeline);
    return stats;
}

Divergence output_divergence(std::span<const Vec> a, std::span<const Vec> b) {
    if (a.size() != b.size()) {
        throw Error(ErrorCode::dimension, "output_divergence: row counts differ");
    }
    Divergence d;
    if (a.empty()) {
        return d;
    }
    double cos_sum = 0.0;
    double diff2 = 0.0;
    double ref2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].size() != b[i].size()) {
            throw Error(ErrorCode::dimension, "output_divergence: row widths differ");
        }
        if (a[i] == b[i]) {
            cos_sum += 1.0;
        } else {
            const double aa = dot(a[i], a[i]);
            const double bb = dot(b[i], b[i]);
            cos_sum += (aa == 0.0 || bb == 0.0) ? 0.0 : std::clamp(dot(a[i], b[i]) / std::sqrt(aa * bb), -1.0, 1.0);
        }
        for (std::size_t k = 0; k < a[i].size(); ++k) {
            const double e = a[i][k] - b[i][k];
            diff2 += e * e;
            ref2 += a[i][k] * a[i][k];
        }
    }
    d.cosine = cos_sum / static_cast<double>(a.size());
    d.rel_l2 = diff2 == 0.0 ? 0.0 : (ref2 == 0.0 ? std::numeric_limits<double>::infinity() : std::sqrt(diff2 / ref2));
    return d;
}

DivergenceReport compare(const TraceHeader& header,
                         const RecordSource& source_a,
                         const RecordSource& source_b,
                         const Policy& a,
                         const Policy& b,
                         PipelineOptions options) {
    options.keep_outputs = true;
    const StreamShape shape = StreamShape::from_header(header);
    StreamPipeline pa(shape, a, options);
    StreamPipeline pb(shape, b, options);
    ChunkAssembler ca(source_a, a.config.chunk_size);
    ChunkAssembler cb(source_b, b.config.chunk_size);
    SummaryBuilder sa(a, shape.tokens_per_frame);
    SummaryBuilder sb(b, shape.tokens_per_frame);

    using FrameOutputs = std::vector<std::vector<Vec>>;  // [channel][token]
    std::map<std::int64_t, FrameOutputs> pending_a;
    std::map<std::int64_t, FrameOutputs> pending_b;
    auto stash = [&](const ChunkReport& rep, std::map<std::int64_t, FrameOutputs>& into) {
        const std::size_t n = shape.tokens_per_frame;
        for (std::size_t f = 0; f < rep.frames; ++f) {
            FrameOutputs out(shape.channels());
            for (std::size_t c = 0; c < shape.channels(); ++c) {
                const auto& rows = rep.outputs[c];
                out[c].assign(rows.begin() + static_cast<std::ptrdiff_t>(f * n),
                              rows.begin() + static_cast<std::ptrdiff_t>((f + 1) * n));
            }
            into.emplace(rep.first_frame + static_cast<std::int64_t>(f), std::move(out));
        }
    };

    DivergenceReport report;
    std::vector<Divergence> channel_sum(shape.channels(), Divergence{0.0, 0.0});
    double overall_cos = 0.0;
    double overall_l2 = 0.0;
    std::size_t pairs = 0;

    auto drain = [&]() {
        for (auto it = pending_a.begin(); it != pending_a.end();) {
            auto jt = pending_b.find(it->first);
            if (jt == pending_b.end()) {
                ++it;
                continue;
            }
            FrameDivergence fd{it->first, {0.0, 0.0}};
            for (std::size_t c = 0; c < shape.channels(); ++c) {
                const Divergence d = output_divergence(it->second[c], jt->second[c]);
                fd.mean.cosine += d.cosine;
                fd.mean.rel_l2 += d.rel_l2;
                channel_sum[c].cosine += d.cosine;
                channel_sum[c].rel_l2 += d.rel_l2;
                overall_cos += d.cosine;
                overall_l2 += d.rel_l2;
                report.max_rel_l2 = std::max(report.max_rel_l2, d.rel_l2);
                ++pairs;
            }
            fd.mean.cosine /= static_cast<double>(shape.channels());
            fd.mean.rel_l2 /= static_cast<double>(shape.channels());
            report.frames.push_back(fd);
            pending_b.erase(jt);
            it = pending_a.erase(it);
        }
    };

    bool more_a = true;
    bool more_b = true;
    while (more_a || more_b) {
        if (more_a) {
            auto chunk = ca.next();
            if (chunk.empty()) {
                more_a = false;
            } else {
                ChunkReport rep = pa.process_chunk(chunk);
                stash(rep, pending_a);
                rep.outputs.clear();
                sa.add(rep);
            }
        }
        if (more_b) {
            auto chunk = cb.next();
            if (chunk.empty()) {
                more_b = false;
            } else {
                ChunkReport rep = pb.process_chunk(chunk);
                stash(rep, pending_b);
                rep.outputs.clear();
                sb.add(rep);
            }
        }
        drain();
    }
    if (!pending_a.empty() || !pending_b.empty()) {
        throw Error(ErrorCode::invariant, "compare: the two replays produced different frame sets");
    }

    std::sort(report.frames.begin(), report.frames.end(),
              [](const FrameDivergence& x, const FrameDivergence& y) { return x.frame < y.frame; });
    const double frames = static_cast<double>(report.frames.size());
    for (auto& d : channel_sum) {
        report.channels.push_back(frames > 0 ? Divergence{d.cosine / frames, d.rel_l2 / frames} : Divergence{});
    }
    if (pairs > 0) {
        report.overall = {overall_cos / static_cast<double>(pairs), overall_l2 / static_cast<double>(pairs)};
    }
    report.summary_a = sa.finish(pa);
    report.summary_b = sb.finish(pb);
    return report;
}

DivergenceReport compare(const Trace& trace, const Policy& a, const Policy& b, PipelineOptions options) {
    return compare(trace.header, source_from(trace.records), source_from(trace.records), a, b, options);
}

}  // namespace stcache
