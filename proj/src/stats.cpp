// Copyright (C) 2026 The stcache Authors
// SPDX-License-Identifier: Apache-2.0

#include "stcache/stats.hpp"

#include <sstream>

#include "json.hpp"

namespace stcache {

using ordered_json = nlohmann::ordered_json;

namespace {

ordered_json events_json(const EventCounts& e) {
    ordered_json j;
    j["evicted"] = e.evicted;
    j["fused"] = e.fused;
    j["buffered"] = e.buffered;
    j["aggregated"] = e.aggregated;
    j["re_merged"] = e.re_merged;
    j["dropped"] = e.dropped;
    j["discarded"] = e.discarded;
    return j;
}

ordered_json summary_object(const ReplaySummary& s, const StatsFormat& format) {
    ordered_json j;
    j["type"] = "summary";
    j["policy"] = s.policy;
    j["chunks"] = s.chunks;
    j["frames"] = s.frames;
    j["peak_total_tokens"] = s.peak_total_tokens;
    j["peak_temporal_tokens"] = s.peak_temporal_tokens;
    j["peak_spatial_tokens"] = s.peak_spatial_tokens;
    j["peak_bytes"] = s.peak_bytes;
    if (format.timing) {
        j["mean_chunk_ms"] = s.mean_chunk_ms;
    }
    j["full_equivalent_tokens"] = s.full_equivalent_tokens;
    j["full_ratio"] = s.full_ratio;
    j["events"] = events_json(s.events);
    j["spatial_mass_fraction"] = s.spatial_mass_fraction;
    j["saturated_entries"] = s.saturated_entries;
    j["occupancy_histogram"] = s.occupancy_histogram;
    j["score_histogram"] = {{"bins", kScoreBins},
                            {"reference", s.score_histogram[0]},
                            {"window", s.score_histogram[1]},
                            {"anchor", s.score_histogram[2]}};
    return j;
}

ordered_json divergence_object(const Divergence& d) {
    return {{"cosine", d.cosine}, {"rel_l2", d.rel_l2}};
}

}  // namespace

std::string chunk_json(const ChunkReport& r, const StatsFormat& format) {
    ordered_json j;
    j["type"] = "chunk";
    j["chunk"] = r.chunk;
    j["first_frame"] = r.first_frame;
    j["last_frame"] = r.last_frame;
    j["frames"] = r.frames;
    j["temporal_tokens"] = r.temporal_tokens;
    j["reference_tokens"] = r.reference_tokens;
    j["window_tokens"] = r.window_tokens;
    j["anchor_tokens"] = r.anchor_tokens;
    j["spatial_tokens"] = r.spatial_tokens;
    j["active_cells"] = r.active_cells;
    j["total_tokens"] = r.total_tokens;
    j["attended_keys"] = r.attended_keys;
    j["bytes"] = r.bytes;
    j["events"] = events_json(r.events);
    j["retrieval"] = {{"requested", r.retrieval_requested},
                      {"returned_g", r.retrieval_long_term},
                      {"returned_e", r.retrieval_buffered}};
    j["spatial_mass_fraction"] = r.total_mass > 0.0 ? r.spatial_mass / r.total_mass : 0.0;
    j["mean_score"] = {{"reference", r.mean_score[0]}, {"window", r.mean_score[1]}, {"anchor", r.mean_score[2]}};
    if (format.timing) {
        j["wall_ms"] = r.wall_ms;
    }
    return j.dump();
}

std::string summary_json(const ReplaySummary& s, const StatsFormat& format) {
    return summary_object(s, format).dump();
}

std::string csv_header(const StatsFormat& format) {
    std::string h =
        "chunk,first_frame,last_frame,frames,temporal_tokens,reference_tokens,window_tokens,anchor_tokens,"
        "spatial_tokens,active_cells,total_tokens,attended_keys,bytes,evicted,fused,buffered,aggregated,re_merged,"
        "dropped,discarded,retrieval_requested,retrieval_returned_g,retrieval_returned_e,spatial_mass_fraction";
    if (format.timing) {
        h += ",wall_ms";
    }
    return h;
}

std::string chunk_csv(const ChunkReport& r, const StatsFormat& format) {
    std::ostringstream os;
    os.precision(17);
    const auto& e = r.events;
    os << r.chunk << ',' << r.first_frame << ',' << r.last_frame << ',' << r.frames << ',' << r.temporal_tokens << ','
       << r.reference_tokens << ',' << r.window_tokens << ',' << r.anchor_tokens << ',' << r.spatial_tokens << ','
       << r.active_cells << ',' << r.total_tokens << ',' << r.attended_keys << ',' << r.bytes << ',' << e.evicted << ','
       << e.fused << ',' << e.buffered << ',' << e.aggregated << ',' << e.re_merged << ',' << e.dropped << ','
       << e.discarded << ',' << r.retrieval_requested << ',' << r.retrieval_long_term << ',' << r.retrieval_buffered
       << ',' << (r.total_mass > 0.0 ? r.spatial_mass / r.total_mass : 0.0);
    if (format.timing) {
        os << ',' << r.wall_ms;
    }
    return os.str();
}

std::string divergence_json(const DivergenceReport& r, const StatsFormat& format) {
    ordered_json j;
    j["type"] = "divergence";
    j["overall"] = divergence_object(r.overall);
    j["max_rel_l2"] = r.max_rel_l2;
    j["channels"] = ordered_json::array();
    for (const auto& c : r.channels) {
        j["channels"].push_back(divergence_object(c));
    }
    j["frames"] = ordered_json::array();
    for (const auto& f : r.frames) {
        ordered_json row = divergence_object(f.mean);
        row["frame"] = f.frame;
        j["frames"].push_back(row);
    }
    j["a"] = summary_object(r.summary_a, format);
    j["b"] = summary_object(r.summary_b, format);
    return j.dump();
}

}  // namespace stcache
