#include <bit>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "cpsj/baselines.hpp"
#include "cpsj/cpsjoin.hpp"
#include "cpsj/synthetic.hpp"
#include "support.hpp"

using namespace cpsj;

namespace {

JoinParams exact_params(double lambda, std::uint64_t seed) {
    JoinParams p;
    p.lambda = lambda;
    p.use_sketch_filter = false;
    p.seed = seed;
    return p;
}

Dataset tiny(std::vector<std::vector<Token>> rows) {
    std::vector<Record> records;
    for (auto& r : rows) records.push_back(make_record(std::move(r)));
    return Dataset::from_records(std::move(records), false);
}

}  // namespace

TEST(Dedupe, Examples) {
    EXPECT_EQ(dedupe_results(std::vector<Pair>{{1, 2}, {1, 2}, {0, 3}}), (std::vector<Pair>{{0, 3}, {1, 2}}));
    EXPECT_TRUE(dedupe_results(std::vector<Pair>{}).empty());
    const std::vector<Pair> sorted{{0, 1}, {0, 2}, {3, 4}};
    EXPECT_EQ(dedupe_results(std::vector<Pair>(sorted)), sorted);
}

TEST(BruteForcePairs, CountsAndEmits) {
    const Dataset ds = tiny({{1, 2, 3}, {1, 2, 3, 4}, {7, 8}, {1, 2, 3, 5}});
    Metrics m;
    std::vector<Pair> out;
    Verifier v(ds, SimilarityThreshold(0.5), {}, nullptr, m, out);
    brute_force_pairs(std::vector<RecordId>{0}, v);
    EXPECT_EQ(m.pre_candidates, 0U);
    const std::vector<RecordId> all{0, 1, 2, 3};
    brute_force_pairs(all, v);
    EXPECT_EQ(m.pre_candidates, 6U);
    EXPECT_EQ(m.candidates, 6U);
    EXPECT_EQ(dedupe_results(std::move(out)), (std::vector<Pair>{{0, 1}, {0, 3}, {1, 3}}));
}

TEST(BruteForcePoint, CountsAndEmits) {
    const Dataset ds = tiny({{1, 2}, {1, 2}, {5, 6}});
    Metrics m;
    std::vector<Pair> out;
    Verifier v(ds, SimilarityThreshold(0.9), {}, nullptr, m, out);
    brute_force_point(0, std::vector<RecordId>{0}, v);
    EXPECT_TRUE(out.empty());
    EXPECT_EQ(m.pre_candidates, 0U);
    brute_force_point(0, std::vector<RecordId>{0, 1, 2}, v);
    EXPECT_EQ(m.pre_candidates, 2U);
    EXPECT_EQ(out, (std::vector<Pair>{{0, 1}}));
}

TEST(Verifier, OriginTagsRestrictToCrossPairs) {
    const Dataset ds = tiny({{1, 2}, {1, 2}, {1, 2}});
    const std::vector<std::uint8_t> origin{0, 0, 1};
    Metrics m;
    std::vector<Pair> out;
    Verifier v(ds, SimilarityThreshold(0.5), {}, nullptr, m, out, origin);
    brute_force_pairs(std::vector<RecordId>{0, 1, 2}, v);
    EXPECT_EQ(m.pre_candidates, 2U);
    EXPECT_EQ(dedupe_results(std::move(out)), (std::vector<Pair>{{0, 2}, {1, 2}}));
}

TEST(CpsJoin, EmptyDataset) {
    const Dataset ds;
    const JoinOutcome out = cpsjoin(ds, preprocess(ds, {}), JoinParams{});
    EXPECT_TRUE(out.pairs.empty());
    EXPECT_EQ(out.metrics.pre_candidates, 0U);
    EXPECT_EQ(out.metrics.candidates, 0U);
    EXPECT_EQ(out.metrics.max_depth, 0U);
}

TEST(CpsJoin, SmallDatasetFallsThroughToExact) {
    RandomSource rng(101);
    for (int trial = 0; trial < 20; ++trial) {
        const Dataset ds = test_support::random_dataset(rng, 1 + rng.uniform(250), 40, 10);
        const double lambda = 0.5 + 0.1 * static_cast<double>(rng.uniform(5));
        const Preprocessed prep = preprocess(ds, {128, 8, rng.next()});
        for (bool heuristics : {true, false}) {
            JoinParams p = exact_params(lambda, rng.next());
            p.use_heuristics = heuristics;
            const JoinOutcome out = cpsjoin(ds, prep, p);
            EXPECT_EQ(out.pairs, exact_join(ds, lambda).pairs);
            EXPECT_EQ(out.metrics.pre_candidates, ds.size() * (ds.size() - 1) / 2);
        }
    }
}

TEST(CpsJoin, ReferenceTraceFlagsTheDenseRecord) {
    // t = 2, limit = 1, epsilon = 0.1, lambda = 0.5.
    const Dataset ds = tiny({{1, 2}, {1, 3}, {8, 9}});
    const std::vector<EmbeddedRecord> emb{{{1, 1}}, {{1, 1}}, {{9, 9}}};
    JoinParams p = exact_params(0.5, 1);
    p.limit = 1;
    p.use_heuristics = false;

    const std::vector<RecordId> all{0, 1, 2};
    const std::vector<double> scores = reference_scores(all, emb);
    EXPECT_DOUBLE_EQ(scores[0], 0.5);  // ((2-1) + (2-1)) / 2 / (3-1)
    EXPECT_DOUBLE_EQ(scores[1], 0.5);
    EXPECT_DOUBLE_EQ(scores[2], 0.0);
    EXPECT_GT(scores[0], (1 - p.epsilon) * p.lambda);

    RandomSource rng(1);
    ChosenPathJoin join(ds, emb, {}, p, rng);
    const std::vector<RecordId> survivors = join.brute_force(all);
    // A is compared with B and C, then leaves; B's score drops to 0 once A is
    // gone, so B and C survive for splitting.
    EXPECT_EQ(survivors, (std::vector<RecordId>{1, 2}));
    EXPECT_EQ(join.metrics().pre_candidates, 2U);

    // A node holding only C is terminal.
    ChosenPathJoin fresh(ds, emb, {}, p, rng);
    EXPECT_TRUE(fresh.brute_force({2}).empty());
    EXPECT_EQ(fresh.metrics().pre_candidates, 0U);
}

TEST(CpsJoin, CountMapScoreEqualsPairwiseBraunBlanquet) {
    RandomSource rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t t = 1 + rng.uniform(8);
        const std::size_t n = 2 + rng.uniform(12);
        std::vector<EmbeddedRecord> emb(n);
        for (auto& e : emb) {
            e.values.resize(t);
            for (auto& v : e.values) v = static_cast<Token>(rng.uniform(3));
        }
        std::vector<RecordId> ids(n);
        std::iota(ids.begin(), ids.end(), 0);
        const std::vector<double> scores = reference_scores(ids, emb);
        for (std::size_t x = 0; x < n; ++x) {
            double sum = 0.0;
            for (std::size_t y = 0; y < n; ++y) {
                if (y != x) sum += bb_similarity(emb[x], emb[y]);
            }
            EXPECT_NEAR(scores[x], sum / static_cast<double>(n - 1), 1e-12);
        }
    }
}

TEST(CpsJoin, SplitBucketsAreProperGroups) {
    RandomSource rng(13);
    const Dataset ds = test_support::random_dataset(rng, 60, 50, 8);
    const Preprocessed prep = preprocess(ds, {16, 1, 3});
    for (bool heuristics : {true, false}) {
        JoinParams p = exact_params(0.5, 9);
        p.use_heuristics = heuristics;
        RandomSource run(4);
        ChosenPathJoin join(ds, prep.embedded, prep.sketches, p, run);
        std::vector<RecordId> ids(ds.size());
        std::iota(ids.begin(), ids.end(), 0);
        for (int rep = 0; rep < 20; ++rep) {
            for (const WorkingSet& child : join.split(ids, 3)) {
                EXPECT_EQ(child.depth, 3U);
                ASSERT_GE(child.member_ids.size(), 2U);
                EXPECT_TRUE(std::is_sorted(child.member_ids.begin(), child.member_ids.end()));
                EXPECT_EQ(std::adjacent_find(child.member_ids.begin(), child.member_ids.end()), child.member_ids.end());
                // Every member shares at least one embedded position value with the first.
                const auto& first = prep.embedded[child.member_ids.front()];
                for (RecordId m : child.member_ids) {
                    EXPECT_GT(matching_positions(first, prep.embedded[m]), 0U);
                }
            }
        }
    }
}

TEST(CpsJoin, IdenticalEmbeddingsShareEveryBucket) {
    const Dataset ds = tiny({{1, 2}, {3, 4}, {5, 6}});
    const std::vector<EmbeddedRecord> emb{{{4, 4, 4, 4}}, {{4, 4, 4, 4}}, {{1, 2, 3, 5}}};
    JoinParams p = exact_params(0.5, 1);
    for (bool heuristics : {true, false}) {
        p.use_heuristics = heuristics;
        RandomSource rng(3);
        const std::vector<Sketch> sketches(3, Sketch{{0}});
        ChosenPathJoin join(ds, emb, sketches, p, rng);
        for (int rep = 0; rep < 50; ++rep) {
            for (const WorkingSet& child : join.split(std::vector<RecordId>{0, 1, 2}, 1)) {
                EXPECT_EQ(child.member_ids, (std::vector<RecordId>{0, 1}));
            }
        }
    }
}

TEST(CpsJoin, SplitProbabilityClamps) {
    EXPECT_DOUBLE_EQ(split_probability(0.5, 128), 1.0 / 64);
    EXPECT_DOUBLE_EQ(split_probability(0.5, 2), 1.0);
    EXPECT_DOUBLE_EQ(split_probability(0.9, 1), 1.0);
}

TEST(CpsJoin, TinyEmbeddingSplitsOnEveryElement) {
    // lambda * t <= 1: each of the t positions yields a bucket when values agree.
    const Dataset ds = tiny({{1, 2}, {1, 3}});
    const std::vector<EmbeddedRecord> emb{{{7}}, {{7}}};
    JoinParams p = exact_params(0.5, 1);
    for (bool heuristics : {true, false}) {
        p.use_heuristics = heuristics;
        RandomSource rng(11);
        const std::vector<Sketch> sketches(2, Sketch{{0}});
        ChosenPathJoin join(ds, emb, sketches, p, rng);
        for (int rep = 0; rep < 10; ++rep) EXPECT_EQ(join.split(std::vector<RecordId>{0, 1}, 1).size(), 1U);
    }
}

TEST(CpsJoin, PrecisionCanonicalAndSubsetOfExact) {
    RandomSource rng(55);
    for (int trial = 0; trial < 12; ++trial) {
        const Dataset ds = test_support::random_dataset(rng, 300 + rng.uniform(600), 120, 12);
        const double lambda = 0.5 + 0.1 * static_cast<double>(rng.uniform(5));
        const Preprocessed prep = preprocess(ds, {64, 4, rng.next()});
        const auto truth = exact_join(ds, lambda).pairs;
        for (bool heuristics : {true, false}) {
            for (bool filter : {true, false}) {
                JoinParams p;
                p.lambda = lambda;
                p.limit = 20;
                p.use_heuristics = heuristics;
                p.use_sketch_filter = filter;
                p.seed = rng.next();
                const JoinOutcome out = cpsjoin(ds, prep, p);
                EXPECT_TRUE(test_support::is_canonical(out.pairs));
                EXPECT_TRUE(test_support::all_pairs_similar(ds, out.pairs, lambda));
                EXPECT_TRUE(test_support::is_subset(out.pairs, truth));
                EXPECT_LE(out.metrics.results, out.metrics.candidates);
                EXPECT_LE(out.metrics.candidates, out.metrics.pre_candidates);
                EXPECT_EQ(out.metrics.results, out.pairs.size());
                if (!filter) {
                    EXPECT_EQ(out.metrics.candidates, out.metrics.pre_candidates);
                }
            }
        }
    }
}

TEST(CpsJoin, DeterministicForFixedSeed) {
    const Dataset ds = generate_planted([] {
        SyntheticSpec s = planted_workload(0.5, 4);
        s.records = 2000;
        s.planted_pairs = 100;
        return s;
    }());
    const Preprocessed prep = preprocess(ds, {});
    for (bool heuristics : {true, false}) {
        JoinParams p;
        p.use_heuristics = heuristics;
        p.seed = 77;
        JoinOutcome a = cpsjoin(ds, prep, p);
        JoinOutcome b = cpsjoin(ds, prep, p);
        a.metrics.wall_time = b.metrics.wall_time = 0;
        EXPECT_EQ(a.pairs, b.pairs);
        EXPECT_EQ(a.metrics, b.metrics);
        EXPECT_GT(a.pairs.size(), 0U);
    }
}

TEST(CpsJoin, RejectsMisalignedInputs) {
    const Dataset ds = tiny({{1, 2}, {2, 3}});
    const Preprocessed prep = preprocess(ds, {8, 1, 1});
    RandomSource rng(1);
    const std::vector<EmbeddedRecord> short_emb(prep.embedded.begin(), prep.embedded.begin() + 1);
    EXPECT_THROW(ChosenPathJoin(ds, short_emb, prep.sketches, JoinParams{}, rng), std::invalid_argument);
    EXPECT_THROW(ChosenPathJoin(ds, prep.embedded, {}, JoinParams{}, rng), std::invalid_argument);
    const std::vector<EmbeddedRecord> mixed{{{1, 2}}, {{1}}};
    EXPECT_THROW(ChosenPathJoin(ds, mixed, prep.sketches, JoinParams{}, rng), std::invalid_argument);
    JoinParams bad;
    bad.epsilon = 1.0;
    EXPECT_THROW(ChosenPathJoin(ds, prep.embedded, prep.sketches, bad, rng), std::invalid_argument);
}

TEST(CpsJoin, AggregateSketchTakesEachBitFromAMember) {
    std::vector<Sketch> sketches{Sketch{{0ULL}}, Sketch{{~0ULL}}};
    RandomSource rng(5);
    const Sketch agg = aggregate_sketch(std::vector<RecordId>{1}, sketches, rng);
    EXPECT_EQ(agg.words[0], ~0ULL);
    const Sketch mixed = aggregate_sketch(std::vector<RecordId>{0, 1}, sketches, rng);
    const int ones = std::popcount(mixed.words[0]);
    EXPECT_GT(ones, 16);
    EXPECT_LT(ones, 48);
}
