#pragma once

// Seeded synthetic workloads: background noise records plus planted pairs
// whose Jaccard similarity falls in a chosen band.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "cpsj/dataset.hpp"
#include "cpsj/hashing.hpp"

namespace cpsj {

/// Draws tokens from [0, universe).
class TokenSampler {
public:
    virtual ~TokenSampler() = default;
    virtual Token draw(RandomSource& rng) const = 0;
};

class UniformTokens final : public TokenSampler {
public:
    explicit UniformTokens(std::uint32_t universe) : universe_(universe) {
        if (universe == 0) throw std::invalid_argument("universe must be non-empty");
    }
    Token draw(RandomSource& rng) const override { return static_cast<Token>(rng.uniform(universe_)); }

private:
    std::uint32_t universe_;
};

/// P[token = r] proportional to 1 / (r + 1)^exponent.
class ZipfTokens final : public TokenSampler {
public:
    ZipfTokens(std::uint32_t universe, double exponent) : cdf_(universe) {
        if (universe == 0) throw std::invalid_argument("universe must be non-empty");
        double total = 0.0;
        for (std::uint32_t r = 0; r < universe; ++r) {
            total += std::pow(static_cast<double>(r) + 1.0, -exponent);
            cdf_[r] = total;
        }
        for (double& c : cdf_) c /= total;
        cdf_.back() = 1.0;
    }
    Token draw(RandomSource& rng) const override {
        const double u = rng.uniform01();
        return static_cast<Token>(std::upper_bound(cdf_.begin(), cdf_.end(), u) - cdf_.begin());
    }

private:
    std::vector<double> cdf_;
};

/// `size` distinct tokens from `sampler`.
inline Record random_record(std::size_t size, const TokenSampler& sampler, RandomSource& rng) {
    std::unordered_set<Token> chosen;
    std::vector<Token> tokens;
    tokens.reserve(size);
    while (tokens.size() < size) {
        const Token tok = sampler.draw(rng);
        if (chosen.insert(tok).second) tokens.push_back(tok);
    }
    return make_record(std::move(tokens));
}

struct SyntheticSpec {
    std::size_t records = 10'000;  // total, planted pairs included
    std::size_t planted_pairs = 500;
    double min_similarity = 0.5;  // planted Jaccard band
    double max_similarity = 0.7;
    std::size_t min_size = 20;  // record sizes, inclusive
    std::size_t max_size = 40;
    std::uint32_t universe = 1'000'000;
    double zipf_exponent = 0.0;  // 0 draws tokens uniformly
    std::uint64_t seed = 1;
};

/// Largest overlap c with c / (2s - c) <= target for two size-s sets,
/// raised to the band minimum if rounding fell below it.
inline std::size_t planted_overlap(std::size_t size, double target, double band_min) {
    const double s = static_cast<double>(size);
    auto c = static_cast<std::size_t>(std::floor(2.0 * s * target / (1.0 + target)));
    c = std::min(c, size);
    while (c < size && static_cast<double>(c) < band_min * (2.0 * s - static_cast<double>(c))) ++c;
    return c;
}

/// Background records plus pairs (x, y) of equal size whose similarity lies in
/// [min_similarity, max_similarity] up to integer rounding. Planted partners
/// sit at random positions.
inline Dataset generate_planted(const SyntheticSpec& spec) {
    if (spec.min_size < 2 || spec.max_size < spec.min_size) throw std::invalid_argument("bad record size range");
    if (2 * spec.planted_pairs > spec.records) throw std::invalid_argument("more planted records than records");
    if (!(spec.min_similarity > 0.0 && spec.min_similarity <= spec.max_similarity && spec.max_similarity <= 1.0)) {
        throw std::invalid_argument("bad similarity band");
    }
    RandomSource rng(spec.seed);
    std::unique_ptr<TokenSampler> sampler;
    if (spec.zipf_exponent > 0.0) {
        sampler = std::make_unique<ZipfTokens>(spec.universe, spec.zipf_exponent);
    } else {
        sampler = std::make_unique<UniformTokens>(spec.universe);
    }
    auto draw_size = [&] { return spec.min_size + rng.uniform(spec.max_size - spec.min_size + 1); };

    std::vector<Record> records;
    records.reserve(spec.records);
    for (std::size_t p = 0; p < spec.planted_pairs; ++p) {
        const std::size_t size = draw_size();
        const double target = spec.min_similarity + (spec.max_similarity - spec.min_similarity) * rng.uniform01();
        const std::size_t overlap = planted_overlap(size, target, spec.min_similarity);
        Record x = random_record(size, *sampler, rng);
        std::vector<Token> shuffled = x.tokens;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        std::unordered_set<Token> used(x.tokens.begin(), x.tokens.end());
        std::vector<Token> y_tokens(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(overlap));
        while (y_tokens.size() < size) {
            const Token tok = sampler->draw(rng);
            if (used.insert(tok).second) y_tokens.push_back(tok);
        }
        records.push_back(std::move(x));
        records.push_back(make_record(std::move(y_tokens)));
    }
    while (records.size() < spec.records) records.push_back(random_record(draw_size(), *sampler, rng));
    std::shuffle(records.begin(), records.end(), rng);
    return Dataset::from_records(std::move(records));
}

/// Records with independent uniform tokens and no planted structure.
inline Dataset generate_uniform(std::size_t n, std::size_t min_size, std::size_t max_size, std::uint32_t universe,
                                std::uint64_t seed) {
    SyntheticSpec spec;
    spec.records = n;
    spec.planted_pairs = 0;
    spec.min_size = min_size;
    spec.max_size = max_size;
    spec.universe = universe;
    spec.seed = seed;
    return generate_planted(spec);
}

/// Planted-pairs workload: n = 10^4, 500 pairs in [lambda, lambda + 0.2].
inline SyntheticSpec planted_workload(double lambda, std::uint64_t seed) {
    SyntheticSpec spec;
    spec.min_similarity = lambda;
    spec.max_similarity = std::min(1.0, lambda + 0.2);
    spec.seed = seed;
    return spec;
}

/// Large records over a skewed token distribution, n = 5000.
inline SyntheticSpec zipf_workload(double lambda, std::uint64_t seed) {
    SyntheticSpec spec = planted_workload(lambda, seed);
    spec.records = 5'000;
    spec.planted_pairs = 250;
    spec.min_size = 100;
    spec.max_size = 200;
    spec.universe = 20'000;
    spec.zipf_exponent = 1.0;
    return spec;
}

}  // namespace cpsj
