// Copyright (C) 2026 The stcache Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "stcache/error.hpp"
#include "stcache/stats.hpp"
#include "stcache/synth.hpp"
#include "stcache/trace_io.hpp"

namespace stcache::cli {

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) {
        parts.push_back(cur);
    }
    return parts;
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) {
            throw std::invalid_argument(v);
        }
        return d;
    } catch (const std::exception&) {
        throw UsageError("invalid number for " + key + ": '" + v + "'");
    }
}

std::size_t to_size(const std::string& key, const std::string& v) {
    const double d = to_double(key, v);
    if (d < 0 || d != static_cast<double>(static_cast<std::size_t>(d))) {
        throw UsageError("invalid count for " + key + ": '" + v + "'");
    }
    return static_cast<std::size_t>(d);
}

void set_split(CacheConfig& c, const std::string& v) {
    auto parts = split(v, v.find('/') != std::string::npos ? '/' : ',');
    if (parts.size() != 3) {
        throw UsageError("--split expects three fractions w,a,r");
    }
    c.window_frac = to_double("split", parts[0]);
    c.anchor_frac = to_double("split", parts[1]);
    c.retrieve_frac = to_double("split", parts[2]);
}

void apply_option(CacheConfig& c, const std::string& key, const std::string& v) {
    if (key == "window") {
        c.window_frames = to_size(key, v);
    } else if (key == "gamma") {
        c.gamma = to_double(key, v);
    } else if (key == "lambda") {
        c.lambda = to_double(key, v);
    } else if (key == "voxel-size") {
        c.voxel_size = to_double(key, v);
    } else if (key == "g-cap") {
        c.g_cap = to_size(key, v);
    } else if (key == "e-cap") {
        c.e_cap = to_size(key, v);
    } else if (key == "knn-mult") {
        c.knn_radius_mult = to_double(key, v);
    } else if (key == "budget-mult") {
        c.budget_multiplier = to_double(key, v);
    } else if (key == "chunk") {
        c.chunk_size = to_size(key, v);
    } else if (key == "split") {
        set_split(c, v);
    } else if (key == "half") {
        c.half_precision = v.empty() || v == "1" || v == "true";
    } else {
        throw UsageError("unknown policy option '" + key + "'");
    }
}

int exit_code_for(const Error& e) {
    switch (e.code()) {
    case ErrorCode::config:
        return kConfigInvalid;
    case ErrorCode::invariant:
        return kInvariant;
    case ErrorCode::trace_version:
    case ErrorCode::trace_shape:
    case ErrorCode::trace_truncated:
    case ErrorCode::trace_format:
    case ErrorCode::dimension:
    case ErrorCode::invalid_argument:
    case ErrorCode::out_of_range:
        return kTraceInvalid;
    default:
        return kInvariant;
    }
}

/// Output stream that is either a file or the provided fallback.
class Sink {
public:
    Sink(const std::string& path, std::ostream& fallback) : m_out(&fallback) {
        if (!path.empty() && path != "-") {
            m_file.open(path, std::ios::trunc);
            if (!m_file) {
                throw UsageError("cannot open '" + path + "' for writing");
            }
            m_out = &m_file;
        }
    }
    std::ostream& stream() {
        return *m_out;
    }

private:
    std::ofstream m_file;
    std::ostream* m_out;
};

struct ReplayFlags {
    std::string trace;
    std::string policy = "stac";
    std::vector<std::pair<std::string, std::string>> options;
    std::string stats_out;
    bool seed_check = false;
    bool no_audit = false;
    bool csv = false;
    bool no_timing = false;
    std::size_t threads = 0;
};

std::size_t resolve_threads(std::size_t requested) {
    if (requested > 0) {
        return requested;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Replays once, writing each chunk line as soon as it is complete.
std::string replay_once(const ReplayFlags& f, const Policy& policy, std::ostream* live, const StatsFormat& fmt) {
    TraceReader reader(f.trace);
    PipelineOptions opts;
    opts.threads = resolve_threads(f.threads);
    opts.audit = !f.no_audit;
    opts.keep_outputs = false;

    std::ostringstream captured;
    auto emit = [&](const std::string& line) {
        captured << line << '\n';
        if (live) {
            *live << line << '\n';
            live->flush();
        }
    };
    if (f.csv) {
        emit(csv_header(fmt));
    }
    const ReplayStats stats = run_stream(reader.header(), source_from(reader), policy, opts, [&](const ChunkReport& r) {
        emit(f.csv ? chunk_csv(r, fmt) : chunk_json(r, fmt));
    });
    if (!f.csv) {
        emit(summary_json(stats.summary, fmt));
    }
    return captured.str();
}

int cmd_replay(const ReplayFlags& f, std::ostream& out, std::ostream& err) {
    Policy policy;
    policy.kind = parse_policy_kind(f.policy);
    for (const auto& [k, v] : f.options) {
        apply_option(policy.config, k, v);
    }
    const auto problems = validate_policy(policy);
    if (!problems.empty()) {
        for (const auto& p : problems) {
            err << "config error: " << p << '\n';
        }
        return kConfigInvalid;
    }
    Sink sink(f.stats_out, out);
    StatsFormat fmt{!f.no_timing};
    if (!f.seed_check) {
        replay_once(f, policy, &sink.stream(), fmt);
        return kOk;
    }
    // Timing varies run to run, so the determinism check compares timing-free streams.
    const StatsFormat stable{false};
    const std::string first = replay_once(f, policy, nullptr, stable);
    const std::string second = replay_once(f, policy, nullptr, stable);
    sink.stream() << first;
    sink.stream().flush();
    if (first != second) {
        err << "seed-check: two replays of the same trace produced different statistics\n";
        return kInvariant;
    }
    return kOk;
}

}  // namespace

Policy parse_policy_spec(const std::string& spec) {
    const auto colon = spec.find(':');
    Policy p;
    p.kind = parse_policy_kind(spec.substr(0, colon));
    if (colon == std::string::npos) {
        return p;
    }
    for (const auto& item : split(spec.substr(colon + 1), ',')) {
        if (item.empty()) {
            continue;
        }
        const auto eq = item.find('=');
        apply_option(p.config, item.substr(0, eq), eq == std::string::npos ? "" : item.substr(eq + 1));
    }
    return p;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"stcache: spatio-temporal KV-cache replay tools"};
    app.require_subcommand(1);

    // synth
    SynthParams sp;
    std::string motion = "revisit";
    std::string synth_out;
    bool text = false;
    auto* synth = app.add_subcommand("synth", "Generate a seeded synthetic trace");
    synth->add_option("--seed", sp.seed, "Generator seed")->capture_default_str();
    synth->add_option("--frames", sp.frames, "Frame count T")->capture_default_str();
    synth->add_option("--tokens", sp.tokens, "Tokens per frame N")->capture_default_str();
    synth->add_option("--layers", sp.layers, "Layers L")->capture_default_str();
    synth->add_option("--heads", sp.heads, "Heads H")->capture_default_str();
    synth->add_option("--dh", sp.head_dim, "Per-head dimension d_h")->capture_default_str();
    synth->add_option("--motion", motion, "random_walk | orbit | revisit")->capture_default_str();
    synth->add_option("--spread", sp.spread, "Key/value noise around region archetypes")->capture_default_str();
    synth->add_option("--regions", sp.regions, "Scene regions (voxels)")->capture_default_str();
    synth->add_option("--visible", sp.visible_regions, "Regions visible per frame")->capture_default_str();
    synth->add_option("--out", synth_out, "Output trace path (.stct)")->required();
    synth->add_flag("--text", text, "Write the line-delimited text encoding");

    // replay
    ReplayFlags rf;
    auto* replay = app.add_subcommand("replay", "Replay a trace under one cache policy and emit statistics");
    replay->add_option("--trace", rf.trace, "Trace file")->required();
    replay->add_option("--policy", rf.policy, "full | window | stac")->capture_default_str();
    const std::pair<const char*, const char*> cache_flags[] = {
        {"window", "Window length in frames (default 4)"},
        {"gamma", "Score decay in (0,1) (default 0.9)"},
        {"lambda", "Cosine threshold for one-to-one merging (default 0.8)"},
        {"voxel-size", "Voxel edge length in scene units (default 0.05)"},
        {"g-cap", "Long-term representatives per voxel (default 4)"},
        {"e-cap", "Buffered evictions per voxel (default 8)"},
        {"knn-mult", "Retrieval radius in voxel sizes (default 2)"},
        {"budget-mult", "Token budget beyond the first frame, in frames (default 8)"},
        {"chunk", "Frames per chunk (default 4)"},
        {"split", "Budget fractions window,anchor,retrieve (default 0.5,0.25,0.25)"},
    };
    for (const auto& [key, help] : cache_flags) {
        replay->add_option_function<std::string>(
            std::string("--") + key, [&rf, key = key](const std::string& v) { rf.options.emplace_back(key, v); },
            help);
    }
    replay->add_flag_callback("--half", [&rf] { rf.options.emplace_back("half", "1"); },
                              "Quantize cached keys/values through binary16");
    replay->add_option("--stats-out", rf.stats_out, "Stats destination (default stdout)");
    replay->add_flag("--seed-check", rf.seed_check, "Replay twice and fail with exit code 4 on any difference");
    replay->add_flag("--no-audit", rf.no_audit, "Skip per-chunk invariant audits");
    replay->add_flag("--csv", rf.csv, "Emit per-chunk rows as CSV");
    replay->add_flag("--no-timing", rf.no_timing, "Omit wall-clock fields");
    replay->add_option("--threads", rf.threads, "Worker threads for (layer, head) channels (0 = hardware)");

    // compare
    std::string cmp_trace, spec_a, spec_b, report_out;
    std::size_t cmp_threads = 0;
    bool cmp_no_timing = false;
    auto* cmp = app.add_subcommand("compare", "Compare attention outputs of two policies on one trace");
    cmp->add_option("--trace", cmp_trace, "Trace file")->required();
    cmp->add_option("--a", spec_a, "Policy A, e.g. full or stac:budget-mult=20")->required();
    cmp->add_option("--b", spec_b, "Policy B")->required();
    cmp->add_option("--report-out", report_out, "Report destination (default stdout)");
    cmp->add_option("--threads", cmp_threads, "Worker threads (0 = hardware)");
    cmp->add_flag("--no-timing", cmp_no_timing, "Omit wall-clock fields");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << '\n' << app.help();
        return kUsage;
    }

    try {
        if (*synth) {
            sp.motion = parse_motion(motion);
            SynthGenerator gen(sp);
            TraceHeader h = gen.header();
            h.encoding = text ? TraceEncoding::text : TraceEncoding::binary;
            TraceWriter w(synth_out, h);
            while (auto r = gen.next()) {
                w.write(*r);
            }
            w.close();
            return kOk;
        }
        if (*replay) {
            return cmd_replay(rf, out, err);
        }
        if (*cmp) {
            const Policy a = parse_policy_spec(spec_a);
            const Policy b = parse_policy_spec(spec_b);
            for (const Policy* p : {&a, &b}) {
                const auto problems = validate_policy(*p);
                for (const auto& msg : problems) {
                    err << "config error (" << to_string(p->kind) << "): " << msg << '\n';
                }
                if (!problems.empty()) {
                    return kConfigInvalid;
                }
            }
            TraceReader ra(cmp_trace);
            TraceReader rb(cmp_trace);
            PipelineOptions opts;
            opts.threads = resolve_threads(cmp_threads);
            const DivergenceReport report = compare(ra.header(), source_from(ra), source_from(rb), a, b, opts);
            Sink sink(report_out, out);
            sink.stream() << divergence_json(report, StatsFormat{!cmp_no_timing}) << '\n';
            return kOk;
        }
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const TraceError& e) {
        err << "trace error: " << e.what() << '\n';
        return kTraceInvalid;
    } catch (const Error& e) {
        err << to_string(e.code()) << " error: " << e.what() << '\n';
        if (*synth && e.code() == ErrorCode::invalid_argument) {
            return kUsage;
        }
        return exit_code_for(e);
    }
    return kUsage;
}

}  // namespace stcache::cli
