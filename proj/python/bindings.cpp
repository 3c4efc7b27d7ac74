// Copyright (C) 2026 The stcache Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "stcache/attention.hpp"
#include "stcache/error.hpp"
#include "stcache/morton.hpp"
#include "stcache/numeric.hpp"
#include "stcache/pipeline.hpp"
#include "stcache/spatial_cache.hpp"
#include "stcache/stats.hpp"
#include "stcache/synth.hpp"
#include "stcache/trace_io.hpp"

namespace py = pybind11;
using namespace stcache;

namespace {

using Triple = std::tuple<double, double, double>;

Point3 to_point(const Triple& t) {
    return {std::get<0>(t), std::get<1>(t), std::get<2>(t)};
}

py::dict budget_dict(const BudgetAllocation& b) {
    py::dict d;
    d["window_tokens"] = b.window_tokens;
    d["anchor_tokens"] = b.anchor_tokens;
    d["retrieve_tokens"] = b.retrieve_tokens;
    return d;
}

/// Replays a trace file and returns the stats stream as JSON lines (chunks, then the summary).
std::vector<std::string> replay_lines(const std::string& path, const Policy& policy, std::size_t threads, bool timing) {
    TraceReader reader(path);
    PipelineOptions opts;
    opts.threads = threads;
    opts.keep_outputs = false;
    std::vector<std::string> lines;
    const StatsFormat fmt{timing};
    ReplayStats s;
    {
        py::gil_scoped_release release;
        s = run_stream(reader.header(), source_from(reader), policy, opts,
                       [&](const ChunkReport& r) { lines.push_back(chunk_json(r, fmt)); });
    }
    lines.push_back(summary_json(s.summary, fmt));
    return lines;
}

std::string compare_json(const std::string& path, const Policy& a, const Policy& b, std::size_t threads) {
    TraceReader ra(path);
    TraceReader rb(path);
    PipelineOptions opts;
    opts.threads = threads;
    py::gil_scoped_release release;
    return divergence_json(compare(ra.header(), source_from(ra), source_from(rb), a, b, opts), {false});
}

}  // namespace

PYBIND11_MODULE(_stcache, m) {
    m.doc() = "Spatio-temporal KV-cache compression kernels and trace replay";

    static py::exception<Error> error(m, "StcacheError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) {
                std::rethrow_exception(p);
            }
        } catch (const Error& e) {
            PyErr_SetString(error.ptr(), (std::string(to_string(e.code())) + ": " + e.what()).c_str());
        }
    });

    // Numerics
    m.def("cosine", [](const Vec& a, const Vec& b) { return cosine(a, b); });
    m.def("masked_softmax", [](const Vec& logits, const std::vector<bool>& mask) { return masked_softmax(logits, mask); },
          py::arg("logits"), py::arg("mask") = std::vector<bool>{});
    m.def("half_roundtrip", [](double x) { return half_roundtrip(x); });

    // Voxels
    m.def("morton_encode", [](std::int64_t x, std::int64_t y, std::int64_t z) { return morton_encode({x, y, z}); });
    m.def("morton_decode", [](std::uint64_t code) {
        const VoxelCoord c = morton_decode(code);
        return std::make_tuple(c.x, c.y, c.z);
    });
    m.def("voxel_of", [](const Triple& p, double size) {
        const VoxelCoord c = voxel_of(to_point(p), size);
        return std::make_tuple(c.x, c.y, c.z);
    });

    // Attention
    m.def(
        "attend",
        [](const std::vector<Vec>& q, const std::vector<Vec>& k, const std::vector<Vec>& v,
           std::vector<std::int64_t> counts, std::size_t head_dim) {
            if (counts.empty()) {
                counts.assign(k.size(), 1);
            }
            AttentionResult r = attend(q, k, v, counts, AttentionMask(q.size(), k.size(), true), head_dim);
            return std::make_pair(r.outputs, r.mass);
        },
        py::arg("queries"), py::arg("keys"), py::arg("values"), py::arg("counts") = std::vector<std::int64_t>{},
        py::arg("head_dim"), "Count-biased attention; returns (outputs, per-key mass).");

    // Configuration
    py::class_<CacheConfig>(m, "CacheConfig")
        .def(py::init<>())
        .def_readwrite("gamma", &CacheConfig::gamma)
        .def_readwrite("lambda_", &CacheConfig::lambda)
        .def_readwrite("voxel_size", &CacheConfig::voxel_size)
        .def_readwrite("g_cap", &CacheConfig::g_cap)
        .def_readwrite("e_cap", &CacheConfig::e_cap)
        .def_readwrite("knn_radius_mult", &CacheConfig::knn_radius_mult)
        .def_readwrite("window_frames", &CacheConfig::window_frames)
        .def_readwrite("budget_multiplier", &CacheConfig::budget_multiplier)
        .def_readwrite("window_frac", &CacheConfig::window_frac)
        .def_readwrite("anchor_frac", &CacheConfig::anchor_frac)
        .def_readwrite("retrieve_frac", &CacheConfig::retrieve_frac)
        .def_readwrite("chunk_size", &CacheConfig::chunk_size)
        .def_readwrite("half_precision", &CacheConfig::half_precision);
    m.def("validate_config", &validate_config);
    m.def("allocate_budget",
          [](const CacheConfig& c, std::size_t n) { return budget_dict(allocate_budget(c, n)); });

    py::class_<Policy>(m, "Policy")
        .def(py::init([](const std::string& kind, const CacheConfig& c) { return Policy{parse_policy_kind(kind), c}; }),
             py::arg("kind") = "stac", py::arg("config") = CacheConfig{})
        .def_property_readonly("kind", [](const Policy& p) { return std::string(to_string(p.kind)); })
        .def_readwrite("config", &Policy::config);

    // Spatial store
    py::class_<VoxelStore>(m, "VoxelStore")
        .def(py::init([](double voxel_size, double lambda, std::size_t g_cap, std::size_t e_cap, double mult) {
                 return VoxelStore(SpatialConfig{voxel_size, lambda, g_cap, e_cap, mult, false});
             }),
             py::arg("voxel_size") = 0.05, py::arg("lambda_") = 0.8, py::arg("g_cap") = 4, py::arg("e_cap") = 8,
             py::arg("knn_radius_mult") = 2.0)
        .def(
            "insert",
            [](VoxelStore& s, const Vec& key, const Vec& value, double score, std::optional<Triple> pos,
               std::int64_t frame, std::int64_t index) {
                CachedToken t;
                t.id = {frame, index};
                t.key = key;
                t.value = value;
                t.score = score;
                if (pos) {
                    t.position = to_point(*pos);
                }
                return std::string(to_string(s.insert_evicted(std::move(t))));
            },
            py::arg("key"), py::arg("value"), py::arg("score"), py::arg("position"), py::arg("frame") = 0,
            py::arg("index") = 0)
        .def(
            "retrieve",
            [](const VoxelStore& s, const std::vector<Triple>& visible, std::size_t quota) {
                std::vector<Point3> pts;
                for (const auto& p : visible) {
                    pts.push_back(to_point(p));
                }
                const Retrieval r = s.retrieve(pts, quota);
                py::list out;
                for (const auto& t : r.tokens) {
                    py::dict d;
                    d["key"] = t.key;
                    d["value"] = t.value;
                    d["count"] = t.count;
                    d["weight"] = t.weight;
                    d["merged"] = t.origin == Origin::merged;
                    out.append(d);
                }
                return out;
            },
            py::arg("visible"), py::arg("quota"))
        .def_property_readonly("token_count", &VoxelStore::token_count)
        .def_property_readonly("represented_count", &VoxelStore::represented_count)
        .def_property_readonly("active_cells", &VoxelStore::active_cells);

    // Traces and replay
    m.def(
        "synth",
        [](const std::string& out, std::uint64_t seed, std::int64_t frames, std::int64_t tokens, std::int64_t layers,
           std::int64_t heads, std::int64_t head_dim, const std::string& motion, double spread, bool text) {
            SynthParams p;
            p.seed = seed;
            p.frames = frames;
            p.tokens = tokens;
            p.layers = layers;
            p.heads = heads;
            p.head_dim = head_dim;
            p.motion = parse_motion(motion);
            p.spread = spread;
            SynthTrace t = synth_trace(p);
            t.header.encoding = text ? TraceEncoding::text : TraceEncoding::binary;
            write_trace(out, t.header, t.records);
        },
        py::arg("out"), py::arg("seed") = 7, py::arg("frames") = 100, py::arg("tokens") = 32, py::arg("layers") = 2,
        py::arg("heads") = 2, py::arg("head_dim") = 16, py::arg("motion") = "revisit", py::arg("spread") = 0.3,
        py::arg("text") = false);
    m.def("replay_lines", &replay_lines, py::arg("trace"), py::arg("policy"), py::arg("threads") = 1,
          py::arg("timing") = false);
    m.def("compare_json", &compare_json, py::arg("trace"), py::arg("a"), py::arg("b"), py::arg("threads") = 1);
}
