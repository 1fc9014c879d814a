#pragma once

// Seeded randomness: a portable PRNG, simple tabulation (Zobrist) hashing,
// MinHash and 1-bit hash functions built on top of it.

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>

#include "cpsj/dataset.hpp"

namespace cpsj {

/// SplitMix64 finalizer. Used for seeding and for deriving child seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derives an independent-looking seed for stream `index` of `master`.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
    return mix64(master ^ mix64(index + 0x632be59bd9b4e019ULL));
}

/// xoshiro256** seeded through SplitMix64. Every draw is defined in terms of
/// 64-bit integer operations so streams are identical on all platforms; none
/// of the implementation-defined <random> distributions are used.
class RandomSource {
public:
    using result_type = std::uint64_t;

    explicit RandomSource(std::uint64_t seed = 0) noexcept : seed_(seed) {
        std::uint64_t z = seed;
        for (auto& word : state_) {
            z += 0x9e3779b97f4a7c15ULL;
            std::uint64_t x = z;
            x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
            x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
            word = x ^ (x >> 31);
        }
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    std::uint64_t seed() const noexcept { return seed_; }

    result_type operator()() noexcept { return next(); }

    std::uint64_t next() noexcept {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform integer in [0, bound), bound > 0 (Lemire's multiply-shift with rejection).
    std::uint64_t uniform(std::uint64_t bound) noexcept {
        using Wide = unsigned __int128;
        Wide m = static_cast<Wide>(next()) * bound;
        auto low = static_cast<std::uint64_t>(m);
        if (low < bound) {
            const std::uint64_t threshold = (0 - bound) % bound;
            while (low < threshold) {
                m = static_cast<Wide>(next()) * bound;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    /// Uniform double in [0,1) with 53 random bits.
    double uniform01() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) noexcept { return p >= 1.0 || uniform01() < p; }

    /// Child stream, leaves this stream advanced by one draw.
    RandomSource fork() noexcept { return RandomSource(next()); }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

    std::uint64_t seed_;
    std::array<std::uint64_t, 4> state_{};
};

/// Simple tabulation hashing from 32-bit keys to 64-bit values: the key is
/// split into four 8-bit characters, each indexing its own random table.
class TabulationHash {
public:
    using Table = std::array<std::uint64_t, 256>;
    using Tables = std::array<Table, 4>;

    TabulationHash() : tables_{} {}
    explicit TabulationHash(const Tables& tables) : tables_(tables) {}
    explicit TabulationHash(RandomSource& rng) {
        for (auto& table : tables_) {
            for (auto& entry : table) entry = rng.next();
        }
    }
    explicit TabulationHash(std::uint64_t seed) {
        RandomSource rng(seed);
        *this = TabulationHash(rng);
    }

    std::uint64_t operator()(std::uint32_t key) const noexcept {
        return tables_[0][key & 0xffU] ^ tables_[1][(key >> 8) & 0xffU] ^
               tables_[2][(key >> 16) & 0xffU] ^ tables_[3][key >> 24];
    }

    const Tables& tables() const noexcept { return tables_; }

private:
    Tables tables_;
};

inline std::uint64_t tab_hash(const TabulationHash& th, std::uint32_t key) noexcept { return th(key); }

/// h(x) = argmin_{j in x} g(j). Ties on the 64-bit value go to the smaller token.
class MinHashFn {
public:
    MinHashFn() = default;
    explicit MinHashFn(TabulationHash g) : g_(std::move(g)) {}
    explicit MinHashFn(RandomSource& rng) : g_(rng) {}

    /// Accepts tokens in any order.
    Token operator()(std::span<const Token> tokens) const {
        if (tokens.empty()) throw std::invalid_argument("minhash of an empty record");
        Token best = tokens[0];
        std::uint64_t best_value = g_(best);
        for (std::size_t i = 1; i < tokens.size(); ++i) {
            const std::uint64_t v = g_(tokens[i]);
            if (v < best_value || (v == best_value && tokens[i] < best)) {
                best_value = v;
                best = tokens[i];
            }
        }
        return best;
    }
    Token operator()(const Record& x) const { return (*this)(std::span<const Token>(x.tokens)); }

    const TabulationHash& base() const noexcept { return g_; }

private:
    TabulationHash g_;
};

inline Token minhash(const MinHashFn& h, const Record& x) { return h(x); }

/// One-bit hash: low bit of a full tabulation hash.
class BitHashFn {
public:
    BitHashFn() = default;
    explicit BitHashFn(TabulationHash g) : g_(std::move(g)) {}
    explicit BitHashFn(RandomSource& rng) : g_(rng) {}

    unsigned operator()(std::uint32_t key) const noexcept { return static_cast<unsigned>(g_(key) & 1U); }

private:
    TabulationHash g_;
};

inline unsigned bit_hash(const BitHashFn& b, std::uint32_t key) noexcept { return b(key); }

}  // namespace cpsj
