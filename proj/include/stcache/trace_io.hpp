// Copyright (C) 2026 The stcache Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "stcache/token.hpp"

namespace stcache {

/**
 * Trace container (extension `.stct`).
 *
 * Line 1 is a JSON object terminated by '\n'. Its first key is always `"magic":"stcache-trace"`,
 * so every file starts with the bytes `{"magic":"stcache-trace"`. The `encoding` key selects the body:
 *
 *   binary: per record, a little-endian u64 payload length followed by the payload:
 *           i64 frame_idx;
 *           for layer in [0,L): for head in [0,H): Q, K, V, each N x d_h f64 row-major;
 *           position presence bitmap, ceil(N/8) bytes, token i -> byte i/8, bit i%8 (LSB first);
 *           positions, N x 3 f64 (absent entries are written as 0).
 *   text:   one JSON object per line: {"frame":i,"channels":[{"q":[[..]],"k":..,"v":..},..],
 *           "positions":[[x,y,z] | null, ..]}.
 *
 * All floats are IEEE-754 binary64; both encodings round-trip exactly.
 */
inline constexpr const char* kTraceMagic = "stcache-trace";
inline constexpr int kTraceVersion = 1;

enum class TraceEncoding { binary, text };

struct SceneExtent {
    std::array<double, 3> min{0.0, 0.0, 0.0};
    std::array<double, 3> max{0.0, 0.0, 0.0};

    friend bool operator==(const SceneExtent&, const SceneExtent&) = default;
};

struct TraceHeader {
    int version = kTraceVersion;
    std::int64_t layers = 1;
    std::int64_t heads = 1;
    std::int64_t head_dim = 1;
    std::int64_t tokens_per_frame = 1;
    std::int64_t frame_count = 0;
    bool has_positions = true;
    SceneExtent scene_extent;
    std::optional<std::uint64_t> generator_seed;
    /// Free-form generator description (motion model, spread, ...); carried through verbatim.
    std::string generator_json;
    TraceEncoding encoding = TraceEncoding::binary;

    std::int64_t channels() const noexcept {
        return layers * heads;
    }
};

/// Throws TraceError(trace_shape, -1, ...) on a malformed header.
void validate_header(const TraceHeader& header);

/// q/k/v of one (layer, head) for one frame, each N x d_h row-major.
struct ChannelTensors {
    std::vector<double> q;
    std::vector<double> k;
    std::vector<double> v;

    friend bool operator==(const ChannelTensors&, const ChannelTensors&) = default;
};

struct TraceRecord {
    std::int64_t frame_idx = 0;
    std::vector<ChannelTensors> channels;  ///< layer-major, then head
    std::vector<std::optional<Point3>> positions;

    /// Unpacks one channel into per-token vectors.
    FrameTokens frame_tokens(std::size_t channel, std::size_t head_dim) const;

    friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

class TraceWriter {
public:
    TraceWriter(const std::string& path, TraceHeader header);
    ~TraceWriter();
    TraceWriter(const TraceWriter&) = delete;
    TraceWriter& operator=(const TraceWriter&) = delete;

    void write(const TraceRecord& record);
    /// Flushes and verifies that frame_count records were written.
    void close();

private:
    std::ofstream m_out;
    TraceHeader m_header;
    std::int64_t m_written = 0;
    std::optional<std::int64_t> m_last_frame;
    bool m_closed = false;
};

/// Streams records one at a time; never loads the whole file.
class TraceReader {
public:
    explicit TraceReader(const std::string& path);

    const TraceHeader& header() const noexcept {
        return m_header;
    }

    /// Next record, or nullopt after frame_count records. Throws TraceError naming the record index.
    std::optional<TraceRecord> next();

private:
    TraceRecord read_binary(std::int64_t index);
    TraceRecord read_text(std::int64_t index);

    std::ifstream m_in;
    TraceHeader m_header;
    std::int64_t m_read = 0;
    std::optional<std::int64_t> m_last_frame;
};

void write_trace(const std::string& path, const TraceHeader& header, const std::vector<TraceRecord>& records);

struct Trace {
    TraceHeader header;
    std::vector<TraceRecord> records;
};

Trace read_trace(const std::string& path);

/// Throws TraceError(trace_shape, index, ...) if the record does not match the header.
void validate_record(const TraceHeader& header, const TraceRecord& record, std::int64_t index);

}  // namespace stcache
