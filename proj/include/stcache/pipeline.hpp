// Copyright (C) 2026 The stcache Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stcache/spatial_cache.hpp"
#include "stcache/temporal_cache.hpp"
#include "stcache/token.hpp"
#include "stcache/trace_io.hpp"

namespace stcache {

enum class PolicyKind { full, window, stac };

const char* to_string(PolicyKind kind);
PolicyKind parse_policy_kind(const std::string& name);

/**
 * Cache policy. `full` keeps every token; `window` keeps the first frame plus the last
 * config.window_frames frames; `stac` runs the temporal + spatial machinery. All policies share
 * config.chunk_size and config.half_precision.
 */
struct Policy {
    PolicyKind kind = PolicyKind::stac;
    CacheConfig config;
};

std::vector<std::string> validate_policy(const Policy& policy);

struct BudgetAllocation {
    std::size_t window_tokens = 0;
    std::size_t anchor_tokens = 0;
    std::size_t retrieve_tokens = 0;
};

/// Splits budget_multiplier * N (the reference frame excluded) by the configured fractions, floored.
/// Throws ErrorCode::config when window_frames * N does not fit in the window share.
BudgetAllocation allocate_budget(const CacheConfig& config, std::size_t tokens_per_frame);

struct StreamShape {
    std::size_t layers = 1;
    std::size_t heads = 1;
    std::size_t head_dim = 1;
    std::size_t tokens_per_frame = 1;

    std::size_t channels() const noexcept {
        return layers * heads;
    }
    static StreamShape from_header(const TraceHeader& header);
};

struct PipelineOptions {
    std::size_t threads = 1;
    bool audit = true;          ///< invariant audits after every chunk
    bool keep_outputs = true;   ///< retain per-channel attention outputs in ChunkReport
};

struct EventCounts {
    std::uint64_t evicted = 0;    ///< tokens leaving the temporal cache
    std::uint64_t fused = 0;
    std::uint64_t buffered = 0;
    std::uint64_t aggregated = 0;
    std::uint64_t re_merged = 0;
    std::uint64_t dropped = 0;    ///< positionless evictions
    std::uint64_t discarded = 0;  ///< evictions under the window policy

    EventCounts& operator+=(const EventCounts& o) noexcept;
};

struct ChunkReport {
    std::size_t chunk = 0;
    std::int64_t first_frame = 0;
    std::int64_t last_frame = 0;
    std::size_t frames = 0;

    // Resident sizes after the chunk, per (layer, head), maximum over channels.
    std::size_t temporal_tokens = 0;
    std::size_t reference_tokens = 0;
    std::size_t window_tokens = 0;
    std::size_t anchor_tokens = 0;
    std::size_t spatial_tokens = 0;
    std::size_t active_cells = 0;
    std::size_t total_tokens = 0;  ///< max over channels of temporal + spatial
    std::size_t attended_keys = 0; ///< cached + retrieved + chunk keys seen by the chunk's queries
    std::uint64_t bytes = 0;       ///< resident k+v across all channels at 2 bytes per scalar

    EventCounts events;  ///< summed over channels
    std::uint64_t retrieval_requested = 0;
    std::uint64_t retrieval_long_term = 0;
    std::uint64_t retrieval_buffered = 0;
    double spatial_mass = 0.0;  ///< attention mass on retrieved keys (not applied to any score)
    double total_mass = 0.0;
    std::array<double, 3> mean_score{};  ///< reference, window, anchor; averaged over channels
    double wall_ms = 0.0;

    /// outputs[channel][token] for the chunk's tokens in frame order (empty unless keep_outputs).
    std::vector<std::vector<Vec>> outputs;
};

/**
 * Chunked streaming driver over independent (layer, head) channels.
 *
 * The first frame is processed on its own and becomes the reference; later frames arrive in
 * chunks of up to chunk_size consecutive frames. Queries of a chunk attend, bidirectionally,
 * to [temporal cache || spatial retrieval || chunk keys]. Eviction, merging and retrieval run at
 * chunk boundaries.
 */
class StreamPipeline {
public:
    StreamPipeline(StreamShape shape, Policy policy, PipelineOptions options = {});
    ~StreamPipeline();
    StreamPipeline(StreamPipeline&&) noexcept;
    StreamPipeline& operator=(StreamPipeline&&) noexcept;

    ChunkReport process_chunk(std::span<const TraceRecord> frames);

    const StreamShape& shape() const noexcept {
        return m_shape;
    }
    const Policy& policy() const noexcept {
        return m_policy;
    }
    const BudgetAllocation& budget() const noexcept {
        return m_budget;
    }
    std::int64_t frames_seen() const noexcept {
        return m_frames_seen;
    }
    const TemporalCache& temporal(std::size_t channel) const;
    /// nullptr unless the policy is stac.
    const VoxelStore* store(std::size_t channel) const;
    std::uint64_t saturated_entries() const;

private:
    struct Channel;
    struct ChannelStep;

    ChannelStep run_channel(std::size_t c, std::span<const TraceRecord> frames, bool reference_chunk);
    void audit_channel(std::size_t c, const ChannelStep& step) const;

    StreamShape m_shape;
    Policy m_policy;
    PipelineOptions m_options;
    BudgetAllocation m_budget;
    std::vector<Channel> m_channels;
    std::int64_t m_frames_seen = 0;
    std::optional<std::int64_t> m_last_frame;
    std::size_t m_chunks = 0;
};

using RecordSource = std::function<std::optional<TraceRecord>()>;

RecordSource source_from(const std::vector<TraceRecord>& records);
RecordSource source_from(TraceReader& reader);

/// Groups a record stream into pipeline chunks: the first record alone, then runs of chunk_size.
class ChunkAssembler {
public:
    ChunkAssembler(RecordSource source, std::size_t chunk_size);
    /// Next chunk, empty at end of stream.
    std::vector<TraceRecord> next();

private:
    RecordSource m_source;
    std::size_t m_chunk_size;
    bool m_first = true;
};

struct ReplaySummary {
    std::string policy;
    std::size_t chunks = 0;
    std::int64_t frames = 0;
    std::size_t peak_total_tokens = 0;
    std::size_t peak_temporal_tokens = 0;
    std::size_t peak_spatial_tokens = 0;
    std::uint64_t peak_bytes = 0;
    double mean_chunk_ms = 0.0;
    std::uint64_t full_equivalent_tokens = 0;  ///< frames * N
    double full_ratio = 0.0;                   ///< full_equivalent_tokens / peak_total_tokens
    EventCounts events;
    double spatial_mass_fraction = 0.0;
    std::uint64_t saturated_entries = 0;
    std::vector<std::size_t> occupancy_histogram;  ///< summed over channels
    /// Final score histograms, rows reference/window/anchor, bins bounded by kScoreBins.
    std::array<std::vector<std::uint64_t>, 3> score_histogram;
};

inline constexpr std::array<double, 6> kScoreBins{0.01, 0.1, 1.0, 10.0, 100.0, 1000.0};

struct ReplayStats {
    std::vector<ChunkReport> chunks;  ///< outputs stripped
    ReplaySummary summary;
};

using ChunkCallback = std::function<void(const ChunkReport&)>;

/// Replays a stream under one policy. `on_chunk` sees each report (with outputs, if kept) as it completes.
ReplayStats run_stream(const TraceHeader& header,
                       RecordSource source,
                       const Policy& policy,
                       PipelineOptions options = {},
                       const ChunkCallback& on_chunk = {});

struct Divergence {
    double cosine = 1.0;   ///< mean per-token cosine between outputs
    double rel_l2 = 0.0;   ///< ||A - B||_F / ||A||_F
};

struct FrameDivergence {
    std::int64_t frame = 0;
    Divergence mean;  ///< averaged over channels
};

struct DivergenceReport {
    std::vector<FrameDivergence> frames;
    std::vector<Divergence> channels;  ///< averaged over frames
    Divergence overall;                ///< averaged over (frame, channel)
    double max_rel_l2 = 0.0;
    ReplaySummary summary_a;
    ReplaySummary summary_b;
};

/// Divergence between two equally shaped output blocks (one row per token).
Divergence output_divergence(std::span<const Vec> a, std::span<const Vec> b);

/// Replays the same trace under both policies and compares their attention outputs frame by frame.
DivergenceReport compare(const TraceHeader& header,
                         const RecordSource& source_a,
                         const RecordSource& source_b,
                         const Policy& a,
                         const Policy& b,
                         PipelineOptions options = {});

DivergenceReport compare(const Trace& trace, const Policy& a, const Policy& b, PipelineOptions options = {});

}  // namespace stcache
