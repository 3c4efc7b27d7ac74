// Copyright (C) 2026 The stcache Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <deque>
#include <random>

#include "oracles.hpp"
#include "stcache/error.hpp"
#include "stcache/temporal_cache.hpp"

using namespace stcache;

namespace {

FrameTokens make_frame(std::int64_t idx, std::size_t n, std::mt19937_64& rng, std::size_t d = 4) {
    FrameTokens f;
    f.frame_idx = idx;
    for (std::size_t i = 0; i < n; ++i) {
        f.queries.push_back(oracle::random_vec(rng, d));
        f.keys.push_back(oracle::random_vec(rng, d));
        f.values.push_back(oracle::random_vec(rng, d));
        f.positions.push_back(Point3{0.01 * idx, 0.0, 0.0});
    }
    return f;
}

}  // namespace

TEST(TemporalCache, ReferenceIsRegisteredOnce) {
    std::mt19937_64 rng(1);
    TemporalCache tc({});
    tc.register_reference(make_frame(0, 3, rng));
    EXPECT_EQ(tc.size(), 3u);
    EXPECT_EQ(tc.reference()[0].origin, Origin::reference);
    EXPECT_EQ(tc.reference()[0].score, 0.0);
    EXPECT_THROW(tc.register_reference(make_frame(1, 3, rng)), Error);
}

TEST(TemporalCache, ReferenceAfterIngestIsRejected) {
    std::mt19937_64 rng(1);
    TemporalCache tc({});
    const FrameTokens f = make_frame(0, 2, rng);
    tc.ingest_frames(std::span(&f, 1));
    EXPECT_THROW(tc.register_reference(make_frame(1, 2, rng)), Error);
}

TEST(TemporalCache, WindowBehavesLikeFifoQueue) {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<int> chunk(1, 4);
    for (std::size_t w : {1u, 3u, 4u, 7u}) {
        TemporalCache tc({0.9, w, 0, 4, false});
        std::deque<std::int64_t> fifo;  // frame ids
        std::int64_t next = 0;
        for (int step = 0; step < 40; ++step) {
            std::vector<FrameTokens> frames;
            const int c = chunk(rng);
            for (int i = 0; i < c; ++i) {
                frames.push_back(make_frame(next++, 2, rng));
            }
            std::vector<std::int64_t> expected;
            for (const auto& f : frames) {
                fifo.push_back(f.frame_idx);
            }
            while (fifo.size() > w) {
                expected.push_back(fifo.front());
                fifo.pop_front();
            }
            const auto out = tc.ingest_frames(frames);
            ASSERT_EQ(out.size(), expected.size() * 2);
            for (std::size_t i = 0; i < expected.size(); ++i) {
                EXPECT_EQ(out[2 * i].id, (TokenId{expected[i], 0}));
                EXPECT_EQ(out[2 * i + 1].id, (TokenId{expected[i], 1}));
            }
            EXPECT_EQ(tc.window_frame_count(), fifo.size());
            EXPECT_LE(tc.window_frame_count(), w);
        }
    }
}

TEST(TemporalCache, IngestRejectsOversizedAndNonMonotoneBatches) {
    std::mt19937_64 rng(3);
    TemporalCache tc({0.9, 4, 0, 2, false});
    std::vector<FrameTokens> three{make_frame(1, 1, rng), make_frame(2, 1, rng), make_frame(3, 1, rng)};
    EXPECT_THROW(tc.ingest_frames(three), Error);
    std::vector<FrameTokens> back{make_frame(5, 1, rng), make_frame(4, 1, rng)};
    EXPECT_THROW(tc.ingest_frames(back), Error);
    std::vector<FrameTokens> ok{make_frame(5, 1, rng)};
    tc.ingest_frames(ok);
    std::vector<FrameTokens> stale{make_frame(5, 1, rng)};
    EXPECT_THROW(tc.ingest_frames(stale), Error);
}

TEST(TemporalCache, ScoreFollowsGeometricSum) {
    for (double gamma : {0.5, 0.9, 0.99}) {
        for (double a : {0.01, 0.3, 2.5}) {
            TemporalCache tc({gamma, 4, 0, 1, false});
            std::mt19937_64 rng(4);
            tc.register_reference(make_frame(0, 1, rng));
            for (int t = 1; t <= 200; ++t) {
                const std::vector<double> mass{a};
                tc.update_scores(mass);
                const double closed = a * (1.0 - std::pow(gamma, t)) / (1.0 - gamma);
                ASSERT_NEAR(tc.reference()[0].score, closed, 1e-10) << gamma << " " << t;
            }
        }
    }
}

TEST(TemporalCache, GammaZeroKeepsOnlyLatestMass) {
    std::mt19937_64 rng(5);
    TemporalCache tc({0.0, 4, 0, 1, false});
    tc.register_reference(make_frame(0, 2, rng));
    tc.update_scores(std::vector<double>{3.0, 1.0});
    tc.update_scores(std::vector<double>{0.5, 0.25});
    EXPECT_EQ(tc.reference()[0].score, 0.5);
    EXPECT_EQ(tc.reference()[1].score, 0.25);
}

TEST(TemporalCache, UpdateScoresRejectsMisalignedMass) {
    std::mt19937_64 rng(6);
    TemporalCache tc({});
    tc.register_reference(make_frame(0, 2, rng));
    try {
        tc.update_scores(std::vector<double>{1.0});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::index_misalignment);
    }
}

TEST(TemporalCache, FreshMassInitializesScores) {
    std::mt19937_64 rng(7);
    TemporalCache tc({0.9, 2, 0, 2, false});
    std::vector<FrameTokens> f{make_frame(1, 2, rng), make_frame(2, 2, rng)};
    tc.ingest_frames(f, std::vector<double>{0.1, 0.2, 0.3, 0.4});
    const auto snap = tc.snapshot();
    ASSERT_EQ(snap.size(), 4u);
    EXPECT_EQ(snap[2].score, 0.3);
    EXPECT_THROW(tc.ingest_frames(std::vector<FrameTokens>{make_frame(3, 2, rng)}, std::vector<double>{1.0}),
                 Error);
}

TEST(TemporalCache, AnchorSelectionMatchesBruteForceTopK) {
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> coarse(0, 5);  // few distinct scores to exercise ties
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t budget = 1 + trial % 9;
        TemporalCache tc({0.9, 1, budget, 4, false});
        std::vector<CachedToken> pool;
        std::int64_t frame = 0;
        for (int step = 0; step < 6; ++step) {
            std::vector<FrameTokens> batch{make_frame(frame++, 3, rng)};
            std::vector<double> fresh;
            for (int i = 0; i < 3; ++i) {
                fresh.push_back(0.25 * coarse(rng));
            }
            auto expelled = tc.ingest_frames(batch, fresh);
            std::vector<CachedToken> candidates = tc.anchors();
            candidates.insert(candidates.end(), expelled.begin(), expelled.end());
            const auto expected = oracle::brute_top_k(candidates, budget);
            const auto rejected = tc.select_anchors(expelled);
            ASSERT_EQ(tc.anchor_count(), expected.size());
            for (std::size_t i = 0; i < expected.size(); ++i) {
                EXPECT_EQ(tc.anchors()[i].id, expected[i]);
                EXPECT_EQ(tc.anchors()[i].origin, Origin::anchor);
            }
            EXPECT_EQ(rejected.size() + tc.anchor_count(), candidates.size());
        }
    }
}

TEST(TemporalCache, SnapshotOrderIsReferenceWindowAnchors) {
    std::mt19937_64 rng(9);
    TemporalCache tc({0.9, 1, 2, 1, false});
    tc.register_reference(make_frame(0, 1, rng));
    for (std::int64_t f = 1; f <= 3; ++f) {
        auto ex = tc.ingest_frames(std::vector<FrameTokens>{make_frame(f, 1, rng)}, std::vector<double>{double(f)});
        tc.select_anchors(ex);
    }
    const auto snap = tc.snapshot();
    ASSERT_EQ(snap.size(), 4u);
    EXPECT_EQ(snap[0].origin, Origin::reference);
    EXPECT_EQ(snap[1].id.frame, 3);
    EXPECT_EQ(snap[2].id.frame, 2);  // higher score ranks first
    EXPECT_EQ(snap[3].id.frame, 1);
}

TEST(TemporalCache, HalfPrecisionQuantizesStoredTokens) {
    std::mt19937_64 rng(10);
    TemporalCache tc({0.9, 4, 0, 1, true});
    FrameTokens f = make_frame(0, 2, rng);
    f.keys[0][0] = 1.0 + 1.0 / 4096;  // not representable in binary16
    f.values[1][2] = 1e6;
    tc.register_reference(f);
    EXPECT_EQ(tc.reference()[0].key[0], 1.0);
    EXPECT_EQ(tc.reference()[1].value[2], kHalfMax);
    EXPECT_EQ(tc.saturated_entries(), 1u);
}

TEST(TemporalCache, RejectsBadConfig) {
    EXPECT_THROW(TemporalCache({1.0, 4, 0, 1, false}), Error);
    EXPECT_THROW(TemporalCache({0.9, 0, 0, 1, false}), Error);
}

TEST(TemporalCache, ReferenceSurvivesManyCycles) {
    std::mt19937_64 rng(11);
    TemporalCache tc({0.9, 2, 3, 4, false});
    tc.register_reference(make_frame(0, 4, rng));
    const std::vector<CachedToken> before = tc.reference();
    std::int64_t f = 1;
    for (int cycle = 0; cycle < 100; ++cycle) {
        std::vector<FrameTokens> batch{make_frame(f, 4, rng), make_frame(f + 1, 4, rng)};
        f += 2;
        tc.select_anchors(tc.ingest_frames(batch, std::vector<double>(8, 0.5)));
    }
    ASSERT_EQ(tc.reference().size(), before.size());
    for (std::size_t i = 0; i < before.size(); ++i) {
        EXPECT_EQ(tc.reference()[i].id, before[i].id);
        EXPECT_EQ(tc.reference()[i].key, before[i].key);
        EXPECT_EQ(tc.reference()[i].value, before[i].value);
        EXPECT_EQ(tc.reference()[i].score, 0.0);
        EXPECT_EQ(tc.reference()[i].count, 1);
    }
}

TEST(TemporalCache, InterleavedChunkSizesExpelInQueueOrder) {
    std::mt19937_64 rng(12);
    TemporalCache tc({0.9, 4, 0, 4, false});
    std::deque<std::int64_t> queue;
    std::int64_t f = 0;
    for (int c : {3, 2, 3}) {
        std::vector<FrameTokens> batch;
        for (int i = 0; i < c; ++i) {
            batch.push_back(make_frame(f, 1, rng));
            queue.push_back(f++);
        }
        std::vector<std::int64_t> expected;
        while (queue.size() > 4) {
            expected.push_back(queue.front());
            queue.pop_front();
        }
        std::vector<std::int64_t> got;
        for (const auto& t : tc.ingest_frames(batch)) {
            got.push_back(t.id.frame);
        }
        EXPECT_EQ(got, expected);
    }
}

TEST(TemporalCache, ThreeStepsOfUnitMass) {
    std::mt19937_64 rng(13);
    TemporalCache tc({0.9, 4, 0, 1, false});
    tc.register_reference(make_frame(0, 1, rng));
    for (int i = 0; i < 3; ++i) {
        tc.update_scores(std::vector<double>{1.0});
    }
    EXPECT_NEAR(tc.reference()[0].score, 2.71, 1e-12);
}

TEST(TemporalCache, EqualScoresKeepTheNewerFrame) {
    std::mt19937_64 rng(14);
    TemporalCache tc({0.9, 1, 1, 1, false});
    CachedToken a, b;
    a.id = {3, 0};
    b.id = {7, 0};
    a.score = b.score = 1.5;
    const auto rejected = tc.select_anchors({a, b});
    ASSERT_EQ(tc.anchor_count(), 1u);
    EXPECT_EQ(tc.anchors()[0].id.frame, 7);
    ASSERT_EQ(rejected.size(), 1u);
    EXPECT_EQ(rejected[0].id.frame, 3);
}

TEST(TemporalCache, SizeIsSumOfRegions) {
    std::mt19937_64 rng(15);
    TemporalCache tc({0.9, 2, 5, 3, false});
    tc.register_reference(make_frame(0, 3, rng));
    std::int64_t f = 1;
    for (int step = 0; step < 10; ++step) {
        std::vector<FrameTokens> batch{make_frame(f++, 3, rng)};
        tc.select_anchors(tc.ingest_frames(batch, std::vector<double>{0.1 * step, 1, 2}));
        EXPECT_EQ(tc.size(), tc.reference_size() + tc.window_token_count() + tc.anchor_count());
        EXPECT_EQ(tc.snapshot().size(), tc.size());
    }
}
