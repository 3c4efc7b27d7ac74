// Copyright (C) 2026 The stcache Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace stcache {

enum class ErrorCode {
    dimension,           ///< vector or matrix shapes disagree
    degenerate_vector,   ///< zero-norm input where a direction is required
    empty_support,       ///< softmax row with every entry masked
    invalid_argument,
    config,              ///< CacheConfig failed validation
    out_of_range,        ///< voxel index outside the Morton band
    state,               ///< operation called in the wrong lifecycle state
    index_misalignment,  ///< mass vector does not match the snapshot it came from
    trace_version,
    trace_shape,
    trace_truncated,
    trace_format,
    invariant,           ///< runtime audit failure
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), m_code(code) {}

    ErrorCode code() const noexcept {
        return m_code;
    }

private:
    ErrorCode m_code;
};

/// Raised by the trace reader; carries the index of the record that failed (-1 for the header).
class TraceError : public Error {
public:
    TraceError(ErrorCode code, std::int64_t record_index, const std::string& what)
        : Error(code, what), m_record_index(record_index) {}

    std::int64_t record_index() const noexcept {
        return m_record_index;
    }

private:
    std::int64_t m_record_index;
};

}  // namespace stcache
