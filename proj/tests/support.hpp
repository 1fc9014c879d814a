#pragma once

// Hand-rolled generators and set-library oracles shared by the test suites.

#include <algorithm>
#include <cstdint>
#include <set>
#include <vector>

#include "cpsj/baselines.hpp"
#include "cpsj/dataset.hpp"
#include "cpsj/hashing.hpp"
#include "cpsj/join.hpp"

namespace cpsj::test_support {

/// Between min_size and max_size distinct tokens from [0, universe).
inline Record random_record(RandomSource& rng, std::size_t min_size, std::size_t max_size, std::uint32_t universe) {
    const std::size_t size = std::min<std::size_t>(min_size + rng.uniform(max_size - min_size + 1), universe);
    std::set<Token> tokens;
    while (tokens.size() < size) tokens.insert(static_cast<Token>(rng.uniform(universe)));
    return Record{std::vector<Token>(tokens.begin(), tokens.end())};
}

/// Random dataset with deliberately overlapping records: some records are
/// mutations of earlier ones so that similar pairs exist at every threshold.
inline Dataset random_dataset(RandomSource& rng, std::size_t n, std::uint32_t universe, std::size_t max_size) {
    std::vector<Record> records;
    records.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!records.empty() && rng.bernoulli(0.4)) {
            std::vector<Token> tokens = records[rng.uniform(records.size())].tokens;
            const std::size_t edits = rng.uniform(3);
            for (std::size_t e = 0; e < edits && !tokens.empty(); ++e) {
                if (rng.bernoulli(0.5)) {
                    tokens.erase(tokens.begin() + static_cast<std::ptrdiff_t>(rng.uniform(tokens.size())));
                } else {
                    tokens.push_back(static_cast<Token>(rng.uniform(universe)));
                }
            }
            if (tokens.size() < 2) tokens = random_record(rng, 2, max_size, universe).tokens;
            records.push_back(make_record(std::move(tokens)));
        } else {
            records.push_back(random_record(rng, 2, max_size, universe));
        }
    }
    return Dataset::from_records(std::move(records));
}

/// Jaccard through std::set_intersection / std::set_union.
inline double set_jaccard(const Record& a, const Record& b) {
    std::vector<Token> inter, uni;
    std::set_intersection(a.tokens.begin(), a.tokens.end(), b.tokens.begin(), b.tokens.end(), std::back_inserter(inter));
    std::set_union(a.tokens.begin(), a.tokens.end(), b.tokens.begin(), b.tokens.end(), std::back_inserter(uni));
    return uni.empty() ? 1.0 : static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

/// Exact rational test J >= lambda, with lambda given as num/den.
inline bool rational_at_least(const Record& a, const Record& b, std::uint64_t num, std::uint64_t den) {
    std::vector<Token> inter, uni;
    std::set_intersection(a.tokens.begin(), a.tokens.end(), b.tokens.begin(), b.tokens.end(), std::back_inserter(inter));
    std::set_union(a.tokens.begin(), a.tokens.end(), b.tokens.begin(), b.tokens.end(), std::back_inserter(uni));
    return inter.size() * den >= num * uni.size();
}

inline bool all_pairs_similar(const Dataset& ds, const std::vector<Pair>& pairs, double lambda) {
    return std::all_of(pairs.begin(), pairs.end(), [&](const Pair& p) { return jaccard(ds[p.a], ds[p.b]) >= lambda; });
}

inline bool is_canonical(const std::vector<Pair>& pairs) {
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (pairs[i].a >= pairs[i].b) return false;
        if (i > 0 && !(pairs[i - 1] < pairs[i])) return false;
    }
    return true;
}

inline bool is_subset(const std::vector<Pair>& small, const std::vector<Pair>& big) {
    return std::includes(big.begin(), big.end(), small.begin(), small.end());
}

}  // namespace cpsj::test_support
