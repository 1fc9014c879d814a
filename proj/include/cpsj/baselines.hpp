#pragma once

// Reference joins: MinHash LSH (k concatenated MinHashes, L repetitions),
// the exact prefix-filter join used to produce ground truth, and the naive
// quadratic oracle.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cpsj/dataset.hpp"
#include "cpsj/hashing.hpp"
#include "cpsj/join.hpp"
#include "cpsj/sketching.hpp"

namespace cpsj {

/// Smallest k tried by the auto-tuner, and the largest.
inline constexpr std::size_t kTuneMinK = 2;
inline constexpr std::size_t kTuneMaxK = 10;
inline constexpr std::size_t kMaxLshK = 32;

struct LshParams {
    std::size_t k = 0;  // 0: auto-tune
    std::size_t L = 0;  // 0: derive from phi_target
    double phi_target = 0.9;
    double lambda = 0.5;
    double delta = 0.05;
    bool use_sketch_filter = true;
    std::uint64_t seed = 1;

    void validate() const {
        if (!(lambda > 0.0 && lambda < 1.0)) throw std::invalid_argument("lambda must lie in (0,1)");
        if (k > kMaxLshK) throw std::invalid_argument("k must be at most 32");
        if (L == 0 && !(phi_target > 0.0 && phi_target < 1.0)) {
            throw std::invalid_argument("phi must lie in (0,1) to derive L");
        }
        if (use_sketch_filter && !(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0,1)");
    }
};

/// Repetitions needed so each pair with J >= lambda is found with probability
/// at least phi: ceil(ln(1/(1-phi)) / lambda^k), never below 1.
inline std::size_t derive_L(double lambda, std::size_t k, double phi) {
    if (!(lambda > 0.0 && lambda < 1.0)) throw std::invalid_argument("lambda must lie in (0,1)");
    if (!(phi > 0.0 && phi < 1.0)) throw std::invalid_argument("phi must lie in (0,1)");
    const long double need = -std::log1p(-static_cast<long double>(phi));
    const long double per_rep = std::pow(static_cast<long double>(lambda), static_cast<long double>(k));
    const long double reps = std::ceil(need / per_rep);
    return std::max<std::size_t>(1, static_cast<std::size_t>(reps));
}

/// Cost of one LSH pass: `lookup` per hash evaluation (n * k of them) plus
/// `compare` per pair generated inside buckets.
struct LshCostModel {
    double lookup = 1.0;
    double compare = 1.0;

    double operator()(std::size_t n, std::size_t k, std::span<const std::size_t> bucket_sizes) const noexcept {
        double pairs = 0.0;
        for (std::size_t b : bucket_sizes) pairs += 0.5 * static_cast<double>(b) * static_cast<double>(b - 1);
        return lookup * static_cast<double>(n) * static_cast<double>(k) + compare * pairs;
    }
};

namespace detail {

/// Evaluates `hashers` on every record: row-major n x hashers.size().
inline std::vector<Token> minhash_matrix(const Dataset& ds, std::span<const MinHashFn> hashers) {
    std::vector<Token> out(ds.size() * hashers.size());
    for (std::size_t r = 0; r < ds.size(); ++r) {
        for (std::size_t h = 0; h < hashers.size(); ++h) out[r * hashers.size() + h] = hashers[h](ds[r]);
    }
    return out;
}

/// Groups records by the first `k` columns of the matrix. Rows are keyed by a
/// 64-bit hash of the tuple; equal keys are split by full tuple comparison.
/// Buckets come out in a deterministic order, members ascending.
inline std::vector<std::vector<RecordId>> group_by_prefix(std::span<const Token> matrix, std::size_t n,
                                                          std::size_t width, std::size_t k) {
    std::vector<std::uint64_t> key(n);
    for (std::size_t r = 0; r < n; ++r) {
        std::uint64_t h = 0x51ed270b27a4d3c9ULL;
        for (std::size_t c = 0; c < k; ++c) h = mix64(h ^ matrix[r * width + c]);
        key[r] = h;
    }
    auto tuple_less = [&](RecordId a, RecordId b) {
        if (key[a] != key[b]) return key[a] < key[b];
        for (std::size_t c = 0; c < k; ++c) {
            const Token x = matrix[a * width + c], y = matrix[b * width + c];
            if (x != y) return x < y;
        }
        return a < b;
    };
    auto same_tuple = [&](RecordId a, RecordId b) {
        if (key[a] != key[b]) return false;
        for (std::size_t c = 0; c < k; ++c) {
            if (matrix[a * width + c] != matrix[b * width + c]) return false;
        }
        return true;
    };
    std::vector<RecordId> order(n);
    std::iota(order.begin(), order.end(), RecordId{0});
    std::sort(order.begin(), order.end(), tuple_less);
    std::vector<std::vector<RecordId>> buckets;
    std::size_t begin = 0;
    while (begin < n) {
        std::size_t end = begin + 1;
        while (end < n && same_tuple(order[begin], order[end])) ++end;
        buckets.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(begin),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
        begin = end;
    }
    return buckets;
}

}  // namespace detail

struct KTuning {
    std::size_t k = kTuneMinK;
    std::array<double, kTuneMaxK + 1> cost{};  // cost[k] for k in [2,10]
};

/// Picks k in [2,10] minimising the estimated cost of one splitting pass.
/// One set of 10 MinHash functions is drawn and k uses the first k of them.
inline KTuning tune_k(const Dataset& ds, double lambda, RandomSource& rng, const LshCostModel& model = {}) {
    if (ds.empty()) throw std::invalid_argument("cannot tune k on an empty dataset");
    (void)SimilarityThreshold(lambda);
    std::vector<MinHashFn> hashers;
    hashers.reserve(kTuneMaxK);
    for (std::size_t i = 0; i < kTuneMaxK; ++i) hashers.emplace_back(rng);
    const std::vector<Token> matrix = detail::minhash_matrix(ds, hashers);
    KTuning out;
    double best = 0.0;
    for (std::size_t k = kTuneMinK; k <= kTuneMaxK; ++k) {
        std::vector<std::size_t> sizes;
        for (const auto& b : detail::group_by_prefix(matrix, ds.size(), kTuneMaxK, k)) sizes.push_back(b.size());
        out.cost[k] = model(ds.size(), k, sizes);
        if (k == kTuneMinK || out.cost[k] < best) {
            best = out.cost[k];
            out.k = k;
        }
    }
    return out;
}

/// Fills in k (auto-tuned) and L (derived from phi) when they are zero.
inline LshParams resolve_lsh_params(const Dataset& ds, LshParams params, RandomSource& rng) {
    params.validate();
    if (params.k == 0) params.k = ds.empty() ? kTuneMinK : tune_k(ds, params.lambda, rng).k;
    if (params.L == 0) params.L = derive_L(params.lambda, params.k, params.phi_target);
    return params;
}

/// L repetitions of: draw k MinHash functions, bucket records by the
/// concatenated k-tuple, brute-force every bucket of two or more records.
inline JoinOutcome minhash_lsh_join(const Dataset& ds, const LshParams& requested, std::span<const Sketch> sketches,
                                   RandomSource& rng, std::span<const std::uint8_t> origin = {}) {
    const auto start = std::chrono::steady_clock::now();
    const LshParams params = resolve_lsh_params(ds, requested, rng);
    JoinOutcome out;
    std::vector<Pair> raw;
    PassThreshold filter;
    if (params.use_sketch_filter) {
        if (sketches.size() != ds.size()) throw std::invalid_argument("sketches not aligned with dataset");
        if (!sketches.empty()) filter = pass_threshold(params.lambda, params.delta, sketches.front().bits());
    }
    Verifier verifier(ds, SimilarityThreshold(params.lambda), sketches, params.use_sketch_filter ? &filter : nullptr,
                      out.metrics, raw, origin);
    std::vector<MinHashFn> hashers(params.k);
    for (std::size_t rep = 0; rep < params.L; ++rep) {
        for (auto& h : hashers) h = MinHashFn(rng);
        if (ds.size() < 2) continue;
        const std::vector<Token> matrix = detail::minhash_matrix(ds, hashers);
        for (const auto& bucket : detail::group_by_prefix(matrix, ds.size(), params.k, params.k)) {
            if (bucket.size() >= 2) brute_force_pairs(bucket, verifier);
        }
    }
    out.pairs = dedupe_results(std::move(raw));
    out.metrics.results = out.pairs.size();
    out.metrics.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

/// Exact join by prefix filtering.
///
/// Tokens are ranked by ascending global frequency; each record indexes its
/// first |x| - ceil(lambda |x|) + 1 tokens in that order. Records are probed
/// shortest first, so every indexed y has |y| <= |x| and the length filter
/// reduces to |y| >= ceil(lambda |x|). Distinct survivors are verified exactly.
inline JoinOutcome exact_join(const Dataset& ds, double lambda_value, std::span<const std::uint8_t> origin = {}) {
    const auto start = std::chrono::steady_clock::now();
    const SimilarityThreshold lambda(lambda_value);
    JoinOutcome out;
    std::vector<Pair> raw;
    Verifier verifier(ds, lambda, {}, nullptr, out.metrics, raw, origin);
    const std::size_t n = ds.size();

    // Rank tokens: rare first, ties by id.
    std::vector<std::pair<std::uint32_t, Token>> by_freq;
    by_freq.reserve(ds.token_frequency().size());
    for (const auto& [tok, freq] : ds.token_frequency()) by_freq.emplace_back(freq, tok);
    std::sort(by_freq.begin(), by_freq.end());
    std::unordered_map<Token, std::uint32_t> rank;
    rank.reserve(by_freq.size());
    for (std::uint32_t r = 0; r < by_freq.size(); ++r) rank.emplace(by_freq[r].second, r);

    std::vector<std::vector<std::uint32_t>> ranked(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& row = ranked[i];
        row.reserve(ds[i].size());
        for (Token tok : ds[i].tokens) row.push_back(rank.at(tok));
        std::sort(row.begin(), row.end());
    }

    std::vector<RecordId> order(n);
    std::iota(order.begin(), order.end(), RecordId{0});
    std::stable_sort(order.begin(), order.end(), [&](RecordId a, RecordId b) { return ds[a].size() < ds[b].size(); });

    std::vector<std::vector<RecordId>> index(by_freq.size());
    std::vector<std::size_t> list_start(by_freq.size(), 0);
    std::vector<std::size_t> seen(n, SIZE_MAX);
    std::vector<RecordId> candidates;
    for (std::size_t pos = 0; pos < n; ++pos) {
        const RecordId x = order[pos];
        const std::size_t size_x = ds[x].size();
        const std::size_t min_size = lambda.ceil_times(size_x);
        const std::size_t prefix = size_x - min_size + 1;
        candidates.clear();
        for (std::size_t p = 0; p < prefix; ++p) {
            const std::uint32_t tok = ranked[x][p];
            auto& list = index[tok];
            std::size_t& first = list_start[tok];
            while (first < list.size() && ds[list[first]].size() < min_size) ++first;
            for (std::size_t e = first; e < list.size(); ++e) {
                const RecordId y = list[e];
                if (seen[y] != pos) {
                    seen[y] = pos;
                    candidates.push_back(y);
                }
            }
        }
        for (RecordId y : candidates) verifier.compare(x, y);
        for (std::size_t p = 0; p < prefix; ++p) index[ranked[x][p]].push_back(x);
    }
    out.pairs = dedupe_results(std::move(raw));
    out.metrics.results = out.pairs.size();
    out.metrics.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

/// All n(n-1)/2 pairs, kept when the floating-point Jaccard reaches lambda.
inline JoinOutcome naive_join(const Dataset& ds, double lambda, std::span<const std::uint8_t> origin = {}) {
    const auto start = std::chrono::steady_clock::now();
    (void)SimilarityThreshold(lambda);
    JoinOutcome out;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t j = i + 1; j < ds.size(); ++j) {
            if (!origin.empty() && origin[i] == origin[j]) continue;
            ++out.metrics.pre_candidates;
            ++out.metrics.candidates;
            if (jaccard(ds[i], ds[j]) >= lambda) out.pairs.push_back({static_cast<RecordId>(i), static_cast<RecordId>(j)});
        }
    }
    out.metrics.results = out.pairs.size();
    out.metrics.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

}  // namespace cpsj
