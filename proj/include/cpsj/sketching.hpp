#pragma once

// 1-bit minwise sketches. Bit i of a sketch is g_i(h_i(x)) for an
// independent MinHash h_i and 1-bit hash g_i, so two sets agree on a bit with
// probability (1 + J) / 2. Sketches are compared word-wise by XOR + popcount.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "cpsj/dataset.hpp"
#include "cpsj/hashing.hpp"

namespace cpsj {

struct Sketch {
    std::vector<std::uint64_t> words;

    std::size_t bits() const noexcept { return words.size() * 64; }
    bool bit(std::size_t i) const noexcept { return (words[i / 64] >> (i % 64)) & 1U; }
    void set_bit(std::size_t i, bool value) noexcept {
        const std::uint64_t mask = std::uint64_t{1} << (i % 64);
        if (value) {
            words[i / 64] |= mask;
        } else {
            words[i / 64] &= ~mask;
        }
    }
    friend bool operator==(const Sketch&, const Sketch&) = default;
};

class SketchScheme {
public:
    static constexpr std::size_t kDefaultWords = 8;

    SketchScheme(std::size_t ell, RandomSource& rng) : ell_(ell) {
        if (ell == 0) throw std::invalid_argument("sketch length must be at least one word");
        const std::size_t nbits = 64 * ell;
        minhashers_.reserve(nbits);
        bithashers_.reserve(nbits);
        for (std::size_t i = 0; i < nbits; ++i) {
            minhashers_.emplace_back(rng);
            bithashers_.emplace_back(rng);
        }
    }
    SketchScheme(std::size_t ell, std::uint64_t seed) {
        RandomSource rng(seed);
        *this = SketchScheme(ell, rng);
    }

    std::size_t words() const noexcept { return ell_; }
    std::size_t bits() const noexcept { return 64 * ell_; }

    Sketch build(const Record& x) const {
        if (x.empty()) throw std::invalid_argument("cannot sketch an empty record");
        Sketch s{std::vector<std::uint64_t>(ell_, 0)};
        for (std::size_t i = 0; i < minhashers_.size(); ++i) {
            if (bithashers_[i](minhashers_[i](x))) s.words[i / 64] |= std::uint64_t{1} << (i % 64);
        }
        return s;
    }

private:
    std::size_t ell_ = 0;
    std::vector<MinHashFn> minhashers_;
    std::vector<BitHashFn> bithashers_;
};

inline Sketch build_sketch(const SketchScheme& scheme, const Record& x) { return scheme.build(x); }

inline std::vector<Sketch> sketch_all(const SketchScheme& scheme, const Dataset& ds) {
    std::vector<Sketch> out;
    out.reserve(ds.size());
    for (const Record& rec : ds.records()) out.push_back(scheme.build(rec));
    return out;
}

inline std::size_t matching_bits(const Sketch& a, const Sketch& b) {
    if (a.words.size() != b.words.size()) throw std::invalid_argument("sketch lengths differ");
    std::size_t differ = 0;
    for (std::size_t w = 0; w < a.words.size(); ++w) differ += std::popcount(a.words[w] ^ b.words[w]);
    return a.bits() - differ;
}

/// Similarity estimate from the matching-bit count: max(0, 2m/nbits - 1).
inline double estimate_from_matches(std::size_t matches, std::size_t nbits) noexcept {
    const double p = static_cast<double>(matches) / static_cast<double>(nbits);
    return std::max(0.0, 2.0 * p - 1.0);
}

inline double estimate_similarity(const Sketch& a, const Sketch& b) {
    return estimate_from_matches(matching_bits(a, b), a.bits());
}

/// Minimum matching-bit count a pair needs to pass the sketch filter.
struct PassThreshold {
    std::size_t min_matching_bits = 0;
    double lambda = 0.0;
    double delta = 0.0;
    std::size_t nbits = 0;

    /// Equivalent threshold on the estimated similarity.
    double estimated_lambda() const noexcept { return estimate_from_matches(min_matching_bits, nbits); }
};

namespace detail {

/// P[X = k] for X ~ Binomial(n, p), in long double via log-gamma.
inline long double binomial_pmf(std::size_t n, std::size_t k, long double p) {
    const long double nn = static_cast<long double>(n), kk = static_cast<long double>(k);
    const long double log_choose = std::lgamma(nn + 1) - std::lgamma(kk + 1) - std::lgamma(nn - kk + 1);
    return std::exp(log_choose + kk * std::log(p) + (nn - kk) * std::log1p(-p));
}

}  // namespace detail

/// The largest m with P[X < m] <= delta for X ~ Binomial(nbits, (1 + lambda) / 2):
/// a pair of similarity exactly lambda is filtered out with probability at most delta.
inline PassThreshold pass_threshold(double lambda, double delta, std::size_t nbits) {
    if (!(lambda > 0.0 && lambda < 1.0)) throw std::invalid_argument("lambda must lie in (0,1)");
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0,1)");
    if (nbits == 0) throw std::invalid_argument("sketch must have at least one bit");
    const long double p = (1.0L + static_cast<long double>(lambda)) / 2.0L;
    long double below = 0.0L;  // P[X < m]
    std::size_t best = 0;
    for (std::size_t m = 1; m <= nbits; ++m) {
        below += detail::binomial_pmf(nbits, m - 1, p);
        if (below > static_cast<long double>(delta)) break;
        best = m;
    }
    return PassThreshold{best, lambda, delta, nbits};
}

inline bool sketch_filter(const Sketch& a, const Sketch& b, const PassThreshold& thr) {
    return matching_bits(a, b) >= thr.min_matching_bits;
}

}  // namespace cpsj
