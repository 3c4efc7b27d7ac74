# Copyright (C) 2026 The stcache Authors
# SPDX-License-Identifier: Apache-2.0

import math
import os
import subprocess

import pytest

import stcache


def test_attend_count_bias_matches_duplicates():
    q = [[0.3, -1.0, 0.5, 2.0]]
    k = [[1.0, 0.0, 0.5, 0.2], [0.1, 0.4, -0.3, 1.0]]
    v = [[1.0, 2.0, 3.0, 4.0], [-1.0, 0.0, 1.0, 0.5]]
    merged, mass = stcache.attend(q, k, v, [3, 1], head_dim=4)
    dup, _ = stcache.attend(q, [k[0]] * 3 + [k[1]], [v[0]] * 3 + [v[1]], head_dim=4)
    assert merged[0] == pytest.approx(dup[0], abs=1e-12)
    assert sum(mass) == pytest.approx(1.0)


def test_morton_and_voxels():
    code = stcache.morton_encode(-5, 7, 1 << 19)
    assert stcache.morton_decode(code) == (-5, 7, 1 << 19)
    assert stcache.voxel_of((0.07, -0.01, 0.0), 0.05) == (1, -1, 0)
    with pytest.raises(stcache.StcacheError):
        stcache.morton_encode(1 << 20, 0, 0)


def test_config_budget_and_validation():
    c = stcache.CacheConfig()
    assert c.gamma == 0.9 and c.g_cap == 4 and c.e_cap == 8
    assert stcache.allocate_budget(c, 32) == {"window_tokens": 128, "anchor_tokens": 64, "retrieve_tokens": 64}
    c.gamma = 1.5
    assert stcache.validate_config(c)


def test_half_roundtrip():
    assert stcache.half_roundtrip(1.0 + 2.0**-11) == 1.0
    assert stcache.half_roundtrip(1e9) == 65504.0


def test_voxel_store_merges_and_retrieves():
    store = stcache.VoxelStore(e_cap=2)
    assert store.insert([1.0, 0.0], [1.0, 1.0], 1.0, (0.01, 0.01, 0.01)) == "buffered"
    assert store.insert([1.0, 0.1], [1.0, 1.0], 2.0, (0.01, 0.01, 0.01)) == "aggregated"
    assert store.insert([1.0, 0.05], [0.0, 0.0], 0.5, (0.02, 0.02, 0.02)) == "fused"
    assert store.insert([0.0, 1.0], [0.0, 0.0], 0.5, None) == "dropped"
    got = store.retrieve([(0.0, 0.0, 0.0)], 10)
    assert len(got) == 1 and got[0]["count"] == 3 and got[0]["merged"]
    assert store.represented_count == 3


def test_replay_and_compare(tmp_path):
    trace = str(tmp_path / "t.stct")
    stcache.synth(trace, seed=3, frames=21, tokens=8, layers=1, heads=2, head_dim=8)
    chunks, summary = stcache.replay(trace)
    assert len(chunks) == 6
    assert summary["type"] == "summary" and summary["frames"] == 21
    assert all(c["total_tokens"] <= summary["peak_total_tokens"] for c in chunks)

    lossless = stcache.CacheConfig()
    lossless.budget_multiplier = 20
    lossless.window_frac, lossless.anchor_frac, lossless.retrieve_frac = 0.2, 0.8, 0.0
    report = stcache.compare(trace, stcache.Policy("full"), stcache.Policy("stac", lossless))
    assert report["overall"]["rel_l2"] < 1e-9
    assert math.isclose(report["overall"]["cosine"], 1.0, abs_tol=1e-12)


def test_unknown_policy_raises():
    with pytest.raises(stcache.StcacheError):
        stcache.Policy("lru")


@pytest.mark.skipif("STCACHE_CLI" not in os.environ, reason="CLI path not provided")
def test_cli_round_trip(tmp_path):
    cli = os.environ["STCACHE_CLI"]
    trace = str(tmp_path / "c.stct")
    subprocess.run([cli, "synth", "--frames", "9", "--tokens", "4", "--out", trace], check=True)
    out = subprocess.run([cli, "replay", "--trace", trace, "--seed-check"], check=True, capture_output=True, text=True)
    assert out.stdout.strip().splitlines()[-1].startswith('{"type":"summary"')
    bad = subprocess.run([cli, "replay", "--trace", trace, "--lambda", "2"], capture_output=True)
    assert bad.returncode == 3
