#include <cmath>
#include <map>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <gtest/gtest.h>

#include "cpsj/baselines.hpp"
#include "cpsj/cpsjoin.hpp"
#include "cpsj/synthetic.hpp"
#include "support.hpp"

using namespace cpsj;

namespace {

using Big = boost::multiprecision::cpp_bin_float_100;

// ceil(ln(1/(1-phi)) / lambda^k) with 100 decimal digits, max 1.
std::size_t big_derive_L(double lambda, std::size_t k, double phi) {
    const Big need = -boost::multiprecision::log1p(-Big(phi));
    const Big per_rep = boost::multiprecision::pow(Big(lambda), static_cast<int>(k));
    const Big reps = boost::multiprecision::ceil(need / per_rep);
    return std::max<std::size_t>(1, reps.convert_to<std::size_t>());
}

Dataset from_rows(std::vector<std::vector<Token>> rows) {
    std::vector<Record> records;
    for (auto& r : rows) records.push_back(make_record(std::move(r)));
    return Dataset::from_records(std::move(records));
}

LshParams lsh(std::size_t k, std::size_t L, double lambda = 0.5) {
    LshParams p;
    p.k = k;
    p.L = L;
    p.lambda = lambda;
    p.use_sketch_filter = false;
    return p;
}

}  // namespace

TEST(DeriveL, Examples) {
    EXPECT_EQ(derive_L(0.5, 4, 0.9), 37U);
    EXPECT_EQ(derive_L(0.5, 1, 1 - std::exp(-1.0)), 2U);
    EXPECT_EQ(derive_L(0.5, 3, 1e-12), 1U);
    EXPECT_THROW(derive_L(0.5, 2, 1.0), std::invalid_argument);
    EXPECT_THROW(derive_L(1.0, 2, 0.5), std::invalid_argument);
}

TEST(DeriveL, MatchesHighPrecision) {
    RandomSource rng(91);
    for (int trial = 0; trial < 500; ++trial) {
        const double lambda = 0.3 + 0.65 * rng.uniform01();
        const std::size_t k = 1 + rng.uniform(10);
        const double phi = 0.01 + 0.98 * rng.uniform01();
        EXPECT_EQ(derive_L(lambda, k, phi), big_derive_L(lambda, k, phi)) << lambda << ' ' << k << ' ' << phi;
    }
}

TEST(LshParams, Validation) {
    LshParams p;
    p.k = 33;
    EXPECT_THROW(p.validate(), std::invalid_argument);
    p.k = 32;
    EXPECT_NO_THROW(p.validate());
}

TEST(MinHashLsh, ForcedCollisionGivesExactJoinOfTheBucket) {
    // Token 0 hashes to zero under these tables, so it always wins the argmin.
    TabulationHash::Tables tables{};
    RandomSource fill(2);
    for (auto& t : tables) {
        for (std::size_t i = 1; i < 256; ++i) t[i] = fill.next() | 1ULL;
    }
    const std::vector<MinHashFn> hashers{MinHashFn(TabulationHash(tables))};
    const Dataset ds = from_rows({{0, 1, 2}, {0, 1, 3}, {0, 7, 8, 9}, {0, 1, 2, 3}, {0, 2, 3}});
    const auto matrix = detail::minhash_matrix(ds, hashers);
    const auto buckets = detail::group_by_prefix(matrix, ds.size(), 1, 1);
    ASSERT_EQ(buckets.size(), 1U);
    ASSERT_EQ(buckets[0].size(), ds.size());

    Metrics m;
    std::vector<Pair> out;
    Verifier v(ds, SimilarityThreshold(0.5), {}, nullptr, m, out);
    brute_force_pairs(buckets[0], v);
    EXPECT_EQ(dedupe_results(std::move(out)), exact_join(ds, 0.5).pairs);
}

TEST(MinHashLsh, IdenticalRecordsAlwaysCollide) {
    const Dataset ds = Dataset::from_records({Record{{5, 6, 7, 8}}, Record{{5, 6, 7, 8}}, Record{{1, 9}}}, false);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        RandomSource rng(seed);
        EXPECT_EQ(minhash_lsh_join(ds, lsh(4, 1), {}, rng).pairs, (std::vector<Pair>{{0, 1}}));
    }
}

TEST(MinHashLsh, PerRepetitionCollisionRate) {
    const Dataset ds = from_rows({{1, 2, 3}, {2, 3, 4}});  // J = 0.5
    const int reps = 10000;
    int found = 0;
    for (int r = 0; r < reps; ++r) {
        RandomSource rng(derive_seed(17, r));
        found += !minhash_lsh_join(ds, lsh(2, 1, 0.5), {}, rng).pairs.empty();
    }
    EXPECT_NEAR(found / static_cast<double>(reps), 0.25, 4 * std::sqrt(0.25 * 0.75 / reps));
}

TEST(MinHashLsh, PrecisionAndRecallWithDerivedL) {
    SyntheticSpec spec = planted_workload(0.5, 21);
    spec.records = 3000;
    spec.planted_pairs = 300;
    const Dataset ds = generate_planted(spec);
    const auto truth = exact_join(ds, 0.5).pairs;
    ASSERT_GE(truth.size(), 300U);
    const Preprocessed prep = preprocess(ds, {0, 8, 5});
    LshParams p;
    p.k = 3;
    p.phi_target = 0.9;
    p.lambda = 0.5;
    RandomSource rng(8);
    const JoinOutcome out = minhash_lsh_join(ds, p, prep.sketches, rng);
    EXPECT_TRUE(test_support::is_subset(out.pairs, truth));
    EXPECT_TRUE(test_support::is_canonical(out.pairs));
    const double r = static_cast<double>(out.pairs.size()) / static_cast<double>(truth.size());
    // Each pair is found with probability >= 0.9, then kept by the filter with
    // probability >= 0.95.
    const double floor = 0.9 * 0.95;
    EXPECT_GE(r, floor - 3 * std::sqrt(floor * (1 - floor) / truth.size()));
}

TEST(MinHashLsh, RecallGrowsWithL) {
    SyntheticSpec spec = planted_workload(0.5, 22);
    spec.records = 1000;
    spec.planted_pairs = 100;
    const Dataset ds = generate_planted(spec);
    std::size_t prev = 0;
    RandomSource rng(9);
    std::vector<Pair> acc;
    for (int L = 1; L <= 8; ++L) {
        const auto pairs = minhash_lsh_join(ds, lsh(3, 1), {}, rng).pairs;
        std::vector<Pair> merged;
        std::set_union(acc.begin(), acc.end(), pairs.begin(), pairs.end(), std::back_inserter(merged));
        acc = std::move(merged);
        EXPECT_GE(acc.size(), prev);
        prev = acc.size();
    }
}

TEST(TuneK, IdenticalContentPicksTwo) {
    std::vector<Record> rows(40, Record{{2, 4, 6, 8, 10}});
    const Dataset ds = Dataset::from_records(std::move(rows), false);
    RandomSource rng(4);
    EXPECT_EQ(tune_k(ds, 0.5, rng).k, 2U);
}

TEST(TuneK, DisjointRecordsPickTwo) {
    std::vector<std::vector<Token>> rows;
    for (Token i = 0; i < 50; ++i) rows.push_back({3 * i, 3 * i + 1, 3 * i + 2});
    const Dataset ds = from_rows(rows);
    RandomSource rng(5);
    const auto tuning = tune_k(ds, 0.5, rng);
    EXPECT_EQ(tuning.k, 2U);
    for (std::size_t k = kTuneMinK; k <= kTuneMaxK; ++k) EXPECT_DOUBLE_EQ(tuning.cost[k], 50.0 * k);
}

TEST(TuneK, MatchesExhaustiveRecomputation) {
    RandomSource gen(6);
    for (int trial = 0; trial < 10; ++trial) {
        const Dataset ds = test_support::random_dataset(gen, 400, 60, 12);
        const std::uint64_t seed = gen.next();
        RandomSource rng(seed);
        const auto tuning = tune_k(ds, 0.5, rng);

        RandomSource replay(seed);
        std::vector<MinHashFn> hashers;
        for (std::size_t i = 0; i < kTuneMaxK; ++i) hashers.emplace_back(replay);
        double best = 0;
        std::size_t best_k = 0;
        for (std::size_t k = kTuneMinK; k <= kTuneMaxK; ++k) {
            std::map<std::vector<Token>, std::size_t> buckets;
            for (const Record& r : ds.records()) {
                std::vector<Token> key;
                for (std::size_t i = 0; i < k; ++i) key.push_back(hashers[i](r));
                ++buckets[key];
            }
            double cost = static_cast<double>(ds.size() * k);
            for (const auto& [key, size] : buckets) cost += 0.5 * static_cast<double>(size * (size - 1));
            EXPECT_DOUBLE_EQ(tuning.cost[k], cost);
            if (best_k == 0 || cost < best) {
                best = cost;
                best_k = k;
            }
        }
        EXPECT_EQ(tuning.k, best_k);
        EXPECT_GE(tuning.k, kTuneMinK);
        EXPECT_LE(tuning.k, kTuneMaxK);
    }
}

TEST(ExactJoin, Examples) {
    EXPECT_EQ(exact_join(from_rows({{1, 2, 3}, {2, 3, 4}}), 0.5).pairs, (std::vector<Pair>{{0, 1}}));
    EXPECT_TRUE(exact_join(from_rows({{1, 2, 3}, {2, 3, 4}, {7, 8}}), 0.99).pairs.empty());
    EXPECT_TRUE(exact_join(Dataset{}, 0.5).pairs.empty());
}

TEST(NaiveJoin, Examples) {
    EXPECT_TRUE(naive_join(Dataset{}, 0.5).pairs.empty());
    EXPECT_EQ(naive_join(from_rows({{1, 2}, {1, 2, 3}}), 0.6).pairs, (std::vector<Pair>{{0, 1}}));
    EXPECT_TRUE(naive_join(from_rows({{1, 2}, {1, 2, 3}}), 0.7).pairs.empty());
}

TEST(ExactJoin, AgreesWithNaiveAcrossThresholds) {
    RandomSource rng(202);
    for (int trial = 0; trial < 100; ++trial) {
        const Dataset ds = test_support::random_dataset(rng, 1 + rng.uniform(200), 1 + rng.uniform(50), 20);
        for (double lambda : {0.5, 0.6, 0.7, 0.8, 0.9}) {
            const JoinOutcome exact = exact_join(ds, lambda);
            EXPECT_EQ(exact.pairs, naive_join(ds, lambda).pairs) << "trial " << trial << " lambda " << lambda;
            EXPECT_EQ(exact.metrics.results, exact.pairs.size());
            EXPECT_LE(exact.metrics.results, exact.metrics.candidates);
        }
    }
}

TEST(ExactJoin, PrunesOnSparseData) {
    RandomSource rng(3);
    const Dataset ds = test_support::random_dataset(rng, 500, 5000, 15);
    const JoinOutcome out = exact_join(ds, 0.8);
    EXPECT_LT(out.metrics.candidates, ds.size() * (ds.size() - 1) / 2);
}
