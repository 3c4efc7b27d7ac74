// Copyright (C) 2026 The stcache Authors
// SPDX-License-Identifier: Apache-2.0

#include "stcache/error.hpp"

namespace stcache {

const char* to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::dimension:
        return "dimension";
    case ErrorCode::degenerate_vector:
        return "degenerate_vector";
    case ErrorCode::empty_support:
        return "empty_support";
    case ErrorCode::invalid_argument:
        return "invalid_argument";
    case ErrorCode::config:
        return "config";
    case ErrorCode::out_of_range:
        return "out_of_range";
    case ErrorCode::state:
        return "state";
    case ErrorCode::index_misalignment:
        return "index_misalignment";
    case ErrorCode::trace_version:
        return "trace_version";
    case ErrorCode::trace_shape:
        return "trace_shape";
    case ErrorCode::trace_truncated:
        return "trace_truncated";
    case ErrorCode::trace_format:
        return "trace_format";
    case ErrorCode::invariant:
        return "invariant";
    }
    return "unknown";
}

}  // namespace stcache
