// Copyright (C) 2026 The stcache Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "stcache/pipeline.hpp"

namespace stcache {

/// Serialization of replay statistics. Every function returns one complete line (no trailing
/// newline), so a stats stream can be parsed line by line while the replay is still running.
struct StatsFormat {
    bool timing = true;  ///< include wall-clock fields (omit for byte-comparable streams)
};

std::string chunk_json(const ChunkReport& report, const StatsFormat& format = {});
std::string summary_json(const ReplaySummary& summary, const StatsFormat& format = {});

std::string csv_header(const StatsFormat& format = {});
std::string chunk_csv(const ChunkReport& report, const StatsFormat& format = {});

std::string divergence_json(const DivergenceReport& report, const StatsFormat& format = {});

}  // namespace stcache
