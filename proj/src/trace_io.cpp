// Copyright (C) 2026 The stcache Authors
// SPDX-License-Identifier: Apache-2.0

#include "stcache/trace_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "json.hpp"
#include "stcache/error.hpp"

namespace stcache {

using ordered_json = nlohmann::ordered_json;

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

std::uint64_t to_le(std::uint64_t v) noexcept {
    if constexpr (std::endian::native == std::endian::big) {
        v = ((v & 0x00000000000000ffULL) << 56) | ((v & 0x000000000000ff00ULL) << 40) |
            ((v & 0x0000000000ff0000ULL) << 24) | ((v & 0x00000000ff000000ULL) << 8) |
            ((v & 0x000000ff00000000ULL) >> 8) | ((v & 0x0000ff0000000000ULL) >> 24) |
            ((v & 0x00ff000000000000ULL) >> 40) | ((v & 0xff00000000000000ULL) >> 56);
    }
    return v;
}

void put_u64(std::vector<unsigned char>& buf, std::uint64_t v) {
    v = to_le(v);
    unsigned char bytes[8];
    std::memcpy(bytes, &v, 8);
    buf.insert(buf.end(), bytes, bytes + 8);
}

void put_f64(std::vector<unsigned char>& buf, double v) {
    put_u64(buf, std::bit_cast<std::uint64_t>(v));
}

std::uint64_t get_u64(const unsigned char* p) noexcept {
    std::uint64_t v;
    std::memcpy(&v, p, 8);
    return to_le(v);
}

double get_f64(const unsigned char* p) noexcept {
    return std::bit_cast<double>(get_u64(p));
}

std::size_t matrix_len(const TraceHeader& h) {
    return static_cast<std::size_t>(h.tokens_per_frame * h.head_dim);
}

std::size_t bitmap_len(const TraceHeader& h) {
    return static_cast<std::size_t>((h.tokens_per_frame + 7) / 8);
}

std::size_t payload_len(const TraceHeader& h) {
    return 8 + static_cast<std::size_t>(h.channels()) * 3 * matrix_len(h) * 8 + bitmap_len(h) +
           static_cast<std::size_t>(h.tokens_per_frame) * 3 * 8;
}

ordered_json header_to_json(const TraceHeader& h) {
    ordered_json j;
    j["magic"] = kTraceMagic;
    j["version"] = h.version;
    j["encoding"] = h.encoding == TraceEncoding::binary ? "binary" : "text";
    j["layers"] = h.layers;
    j["heads"] = h.heads;
    j["d_h"] = h.head_dim;
    j["tokens_per_frame"] = h.tokens_per_frame;
    j["frame_count"] = h.frame_count;
    j["has_positions"] = h.has_positions;
    j["scene_extent"] = {{"min", h.scene_extent.min}, {"max", h.scene_extent.max}};
    j["generator_seed"] = h.generator_seed ? ordered_json(*h.generator_seed) : ordered_json(nullptr);
    j["generator"] = h.generator_json.empty() ? ordered_json(nullptr) : ordered_json::parse(h.generator_json);
    return j;
}

TraceHeader header_from_json(const ordered_json& j) {
    TraceHeader h;
    try {
        if (!j.is_object() || j.value("magic", "") != kTraceMagic) {
            throw TraceError(ErrorCode::trace_format, -1, "trace header: missing magic \"stcache-trace\"");
        }
        h.version = j.at("version").get<int>();
        if (h.version != kTraceVersion) {
            throw TraceError(ErrorCode::trace_version, -1,
                             "trace header: unsupported version " + std::to_string(h.version) + " (expected " +
                                 std::to_string(kTraceVersion) + ")");
        }
        const std::string enc = j.value("encoding", "binary");
        if (enc == "binary") {
            h.encoding = TraceEncoding::binary;
        } else if (enc == "text") {
            h.encoding = TraceEncoding::text;
        } else {
            throw TraceError(ErrorCode::trace_format, -1, "trace header: unknown encoding '" + enc + "'");
        }
        h.layers = j.at("layers").get<std::int64_t>();
        h.heads = j.at("heads").get<std::int64_t>();
        h.head_dim = j.at("d_h").get<std::int64_t>();
        h.tokens_per_frame = j.at("tokens_per_frame").get<std::int64_t>();
        h.frame_count = j.at("frame_count").get<std::int64_t>();
        h.has_positions = j.value("has_positions", true);
        if (j.contains("scene_extent")) {
            h.scene_extent.min = j["scene_extent"].at("min").get<std::array<double, 3>>();
            h.scene_extent.max = j["scene_extent"].at("max").get<std::array<double, 3>>();
        }
        if (j.contains("generator_seed") && !j["generator_seed"].is_null()) {
            h.generator_seed = j["generator_seed"].get<std::uint64_t>();
        }
        if (j.contains("generator") && !j["generator"].is_null()) {
            h.generator_json = j["generator"].dump();
        }
    } catch (const nlohmann::json::exception& e) {
        throw TraceError(ErrorCode::trace_format, -1, std::string("trace header: ") + e.what());
    }
    validate_header(h);
    return h;
}

std::string record_to_text(const TraceHeader& h, const TraceRecord& r) {
    const auto n = static_cast<std::size_t>(h.tokens_per_frame);
    const auto d = static_cast<std::size_t>(h.head_dim);
    auto rows = [&](const std::vector<double>& m) {
        ordered_json out = ordered_json::array();
        for (std::size_t i = 0; i < n; ++i) {
            out.push_back(std::vector<double>(m.begin() + static_cast<std::ptrdiff_t>(i * d),
                                              m.begin() + static_cast<std::ptrdiff_t>((i + 1) * d)));
        }
        return out;
    };
    ordered_json j;
    j["frame"] = r.frame_idx;
    j["channels"] = ordered_json::array();
    for (const auto& c : r.channels) {
        j["channels"].push_back({{"q", rows(c.q)}, {"k", rows(c.k)}, {"v", rows(c.v)}});
    }
    j["positions"] = ordered_json::array();
    for (const auto& p : r.positions) {
        j["positions"].push_back(p ? ordered_json::array({p->x, p->y, p->z}) : ordered_json(nullptr));
    }
    return j.dump();
}

}  // namespace

void validate_header(const TraceHeader& h) {
    if (h.layers < 1 || h.heads < 1 || h.head_dim < 1 || h.tokens_per_frame < 1 || h.frame_count < 0) {
        throw TraceError(ErrorCode::trace_shape, -1, "trace header: L, H, d_h, N must be >= 1 and T >= 0");
    }
    if (h.has_positions) {
        for (int a = 0; a < 3; ++a) {
            if (!std::isfinite(h.scene_extent.min[a]) || !std::isfinite(h.scene_extent.max[a])) {
                throw TraceError(ErrorCode::trace_shape, -1, "trace header: scene extent must be finite");
            }
        }
    }
}

void validate_record(const TraceHeader& h, const TraceRecord& r, std::int64_t index) {
    auto fail = [&](const std::string& what) {
        throw TraceError(ErrorCode::trace_shape, index, "record " + std::to_string(index) + ": " + what);
    };
    if (static_cast<std::int64_t>(r.channels.size()) != h.channels()) {
        fail("expected " + std::to_string(h.channels()) + " (layer, head) channels");
    }
    const std::size_t m = matrix_len(h);
    for (const auto& c : r.channels) {
        if (c.q.size() != m || c.k.size() != m || c.v.size() != m) {
            fail("q/k/v must be N x d_h");
        }
    }
    if (static_cast<std::int64_t>(r.positions.size()) != h.tokens_per_frame) {
        fail("expected " + std::to_string(h.tokens_per_frame) + " positions");
    }
    for (const auto& p : r.positions) {
        if (p && !(std::isfinite(p->x) && std::isfinite(p->y) && std::isfinite(p->z))) {
            fail("non-finite position");
        }
    }
}

FrameTokens TraceRecord::frame_tokens(std::size_t channel, std::size_t head_dim) const {
    const ChannelTensors& c = channels.at(channel);
    const std::size_t n = positions.size();
    FrameTokens f;
    f.frame_idx = frame_idx;
    f.queries.reserve(n);
    f.keys.reserve(n);
    f.values.reserve(n);
    auto row = [&](const std::vector<double>& m, std::size_t i) {
        auto first = m.begin() + static_cast<std::ptrdiff_t>(i * head_dim);
        return Vec(first, first + static_cast<std::ptrdiff_t>(head_dim));
    };
    for (std::size_t i = 0; i < n; ++i) {
        f.queries.push_back(row(c.q, i));
        f.keys.push_back(row(c.k, i));
        f.values.push_back(row(c.v, i));
    }
    f.positions = positions;
    return f;
}

TraceWriter::TraceWriter(const std::string& path, TraceHeader header) : m_header(std::move(header)) {
    validate_header(m_header);
    m_out.open(path, std::ios::binary | std::ios::trunc);
    if (!m_out) {
        throw Error(ErrorCode::invalid_argument, "cannot open '" + path + "' for writing");
    }
    m_out << header_to_json(m_header).dump() << '\n';
}

TraceWriter::~TraceWriter() {
    if (!m_closed) {
        m_out.flush();
    }
}

void TraceWriter::write(const TraceRecord& r) {
    validate_record(m_header, r, m_written);
    if (m_last_frame && r.frame_idx <= *m_last_frame) {
        throw TraceError(ErrorCode::trace_shape, m_written, "record " + std::to_string(m_written) +
                                                                ": frame_idx must be strictly increasing");
    }
    if (m_written >= m_header.frame_count) {
        throw TraceError(ErrorCode::trace_shape, m_written, "more records than the header's frame_count");
    }
    if (m_header.encoding == TraceEncoding::text) {
        m_out << record_to_text(m_header, r) << '\n';
    } else {
        std::vector<unsigned char> buf;
        const std::size_t len = payload_len(m_header);
        buf.reserve(len + 8);
        put_u64(buf, len);
        put_u64(buf, static_cast<std::uint64_t>(r.frame_idx));
        for (const auto& c : r.channels) {
            for (const auto* m : {&c.q, &c.k, &c.v}) {
                for (double x : *m) {
                    put_f64(buf, x);
                }
            }
        }
        std::vector<unsigned char> bitmap(bitmap_len(m_header), 0);
        for (std::size_t i = 0; i < r.positions.size(); ++i) {
            if (r.positions[i]) {
                bitmap[i / 8] |= static_cast<unsigned char>(1u << (i % 8));
            }
        }
        buf.insert(buf.end(), bitmap.begin(), bitmap.end());
        for (const auto& p : r.positions) {
            const Point3 q = p.value_or(Point3{});
            put_f64(buf, q.x);
            put_f64(buf, q.y);
            put_f64(buf, q.z);
        }
        m_out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    }
    if (!m_out) {
        throw Error(ErrorCode::invalid_argument, "trace write failed at record " + std::to_string(m_written));
    }
    m_last_frame = r.frame_idx;
    ++m_written;
}

void TraceWriter::close() {
    if (m_closed) {
        return;
    }
    m_closed = true;
    m_out.flush();
    m_out.close();
    if (m_written != m_header.frame_count) {
        throw TraceError(ErrorCode::trace_shape, m_written,
                         "wrote " + std::to_string(m_written) + " records, header declares " +
                             std::to_string(m_header.frame_count));
    }
}

TraceReader::TraceReader(const std::string& path) {
    m_in.open(path, std::ios::binary);
    if (!m_in) {
        throw TraceError(ErrorCode::trace_format, -1, "cannot open trace '" + path + "'");
    }
    std::string line;
    if (!std::getline(m_in, line)) {
        throw TraceError(ErrorCode::trace_truncated, -1, "trace '" + path + "' has no header line");
    }
    ordered_json j;
    try {
        j = ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw TraceError(ErrorCode::trace_format, -1, std::string("trace header is not valid JSON: ") + e.what());
    }
    m_header = header_from_json(j);
}

std::optional<TraceRecord> TraceReader::next() {
    if (m_read >= m_header.frame_count) {
        return std::nullopt;
    }
    const std::int64_t index = m_read;
    TraceRecord r = m_header.encoding == TraceEncoding::binary ? read_binary(index) : read_text(index);
    validate_record(m_header, r, index);
    if (m_last_frame && r.frame_idx <= *m_last_frame) {
        throw TraceError(ErrorCode::trace_shape, index,
                         "record " + std::to_string(index) + ": frame_idx must be strictly increasing");
    }
    m_last_frame = r.frame_idx;
    ++m_read;
    return r;
}

TraceRecord TraceReader::read_binary(std::int64_t index) {
    auto truncated = [&]() {
        return TraceError(ErrorCode::trace_truncated, index, "record " + std::to_string(index) + ": file truncated");
    };
    unsigned char len_bytes[8];
    if (!m_in.read(reinterpret_cast<char*>(len_bytes), 8)) {
        throw truncated();
    }
    const std::uint64_t len = get_u64(len_bytes);
    const std::size_t expected = payload_len(m_header);
    if (len != expected) {
        throw TraceError(ErrorCode::trace_shape, index,
                         "record " + std::to_string(index) + ": payload is " + std::to_string(len) +
                             " bytes, header implies " + std::to_string(expected));
    }
    std::vector<unsigned char> buf(expected);
    if (!m_in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(expected))) {
        throw truncated();
    }

    const unsigned char* p = buf.data();
    TraceRecord r;
    r.frame_idx = static_cast<std::int64_t>(get_u64(p));
    p += 8;
    const std::size_t m = matrix_len(m_header);
    r.channels.resize(static_cast<std::size_t>(m_header.channels()));
    for (auto& c : r.channels) {
        for (auto* mat : {&c.q, &c.k, &c.v}) {
            mat->resize(m);
            for (double& x : *mat) {
                x = get_f64(p);
                p += 8;
            }
        }
    }
    const unsigned char* bitmap = p;
    p += bitmap_len(m_header);
    const auto n = static_cast<std::size_t>(m_header.tokens_per_frame);
    r.positions.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        Point3 q{get_f64(p), get_f64(p + 8), get_f64(p + 16)};
        p += 24;
        if (bitmap[i / 8] & (1u << (i % 8))) {
            r.positions[i] = q;
        }
    }
    return r;
}

TraceRecord TraceReader::read_text(std::int64_t index) {
    std::string line;
    if (!std::getline(m_in, line)) {
        throw TraceError(ErrorCode::trace_truncated, index, "record " + std::to_string(index) + ": file truncated");
    }
    TraceRecord r;
    try {
        const auto j = ordered_json::parse(line);
        r.frame_idx = j.at("frame").get<std::int64_t>();
        for (const auto& c : j.at("channels")) {
            ChannelTensors t;
            for (auto [name, mat] : {std::pair{"q", &t.q}, std::pair{"k", &t.k}, std::pair{"v", &t.v}}) {
                for (const auto& row : c.at(name)) {
                    for (const auto& x : row) {
                        mat->push_back(x.get<double>());
                    }
                }
            }
            r.channels.push_back(std::move(t));
        }
        for (const auto& p : j.at("positions")) {
            if (p.is_null()) {
                r.positions.emplace_back(std::nullopt);
            } else {
                r.positions.emplace_back(Point3{p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw TraceError(ErrorCode::trace_format, index, "record " + std::to_string(index) + ": " + e.what());
    }
    return r;
}

void write_trace(const std::string& path, const TraceHeader& header, const std::vector<TraceRecord>& records) {
    TraceHeader h = header;
    h.frame_count = static_cast<std::int64_t>(records.size());
    TraceWriter w(path, h);
    for (const auto& r : records) {
        w.write(r);
    }
    w.close();
}

Trace read_trace(const std::string& path) {
    TraceReader reader(path);
    Trace t{reader.header(), {}};
    while (auto r = reader.next()) {
        t.records.push_back(std::move(*r));
    }
    return t;
}

}  // namespace stcache
