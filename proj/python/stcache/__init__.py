# Copyright (C) 2026 The stcache Authors
# SPDX-License-Identifier: Apache-2.0
"""Python bindings for the stcache KV-cache compression library."""

import json

from ._stcache import (
    CacheConfig,
    Policy,
    StcacheError,
    VoxelStore,
    allocate_budget,
    attend,
    compare_json,
    cosine,
    half_roundtrip,
    masked_softmax,
    morton_decode,
    morton_encode,
    replay_lines,
    synth,
    validate_config,
    voxel_of,
)

__all__ = [
    "CacheConfig",
    "Policy",
    "StcacheError",
    "VoxelStore",
    "allocate_budget",
    "attend",
    "compare",
    "cosine",
    "half_roundtrip",
    "masked_softmax",
    "morton_decode",
    "morton_encode",
    "replay",
    "synth",
    "validate_config",
    "voxel_of",
]


def replay(trace, policy=None, threads=1):
    """Replay `trace` and return (chunk reports, summary) as dicts."""
    lines = replay_lines(trace, policy if policy is not None else Policy(), threads, False)
    records = [json.loads(line) for line in lines]
    return records[:-1], records[-1]


def compare(trace, a, b, threads=1):
    """Divergence of policy `b` from policy `a` on the same trace, as a dict."""
    return json.loads(compare_json(trace, a, b, threads))
