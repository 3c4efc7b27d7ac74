// Copyright (C) 2026 The stcache Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "stcache/pipeline.hpp"

namespace stcache::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 1,
    kTraceInvalid = 2,
    kConfigInvalid = 3,
    kInvariant = 4,
};

/// Parses "kind[:key=value,...]", e.g. "stac:budget-mult=20,split=0.2/0.8/0" or "window:window=8".
/// Keys are the replay flag names without leading dashes.
Policy parse_policy_spec(const std::string& spec);

/// Entry point shared by the executable and the tests. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace stcache::cli
