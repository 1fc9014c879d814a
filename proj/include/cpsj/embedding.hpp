#pragma once

// Embedding of a token set x into the size-t set
// f(x) = {(i, h_i(x)) | i in [t]} using t independent MinHash functions.
// Position i is implicit in the storage, so f(x) is a length-t vector and
// |f(x) ∩ f(y)| is a positional equality count.

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "cpsj/dataset.hpp"
#include "cpsj/hashing.hpp"

namespace cpsj {

struct EmbeddedRecord {
    std::vector<Token> values;

    std::size_t size() const noexcept { return values.size(); }
    friend bool operator==(const EmbeddedRecord&, const EmbeddedRecord&) = default;
};

class EmbeddingScheme {
public:
    static constexpr std::size_t kDefaultSize = 128;

    EmbeddingScheme(std::size_t t, RandomSource& rng) {
        if (t == 0) throw std::invalid_argument("embedding size t must be at least 1");
        hashers_.reserve(t);
        for (std::size_t i = 0; i < t; ++i) hashers_.emplace_back(rng);
    }
    EmbeddingScheme(std::size_t t, std::uint64_t seed) {
        RandomSource rng(seed);
        *this = EmbeddingScheme(t, rng);
    }

    std::size_t size() const noexcept { return hashers_.size(); }
    const MinHashFn& hasher(std::size_t i) const noexcept { return hashers_[i]; }

    EmbeddedRecord embed(const Record& x) const {
        if (x.empty()) throw std::invalid_argument("cannot embed an empty record");
        EmbeddedRecord out;
        out.values.reserve(hashers_.size());
        for (const MinHashFn& h : hashers_) out.values.push_back(h(x));
        return out;
    }

private:
    std::vector<MinHashFn> hashers_;
};

inline EmbeddedRecord embed(const EmbeddingScheme& scheme, const Record& x) { return scheme.embed(x); }

inline std::vector<EmbeddedRecord> embed_all(const EmbeddingScheme& scheme, const Dataset& ds) {
    std::vector<EmbeddedRecord> out;
    out.reserve(ds.size());
    for (const Record& rec : ds.records()) out.push_back(scheme.embed(rec));
    return out;
}

/// Number of positions where the two embeddings agree, i.e. |f(x) ∩ f(y)|.
inline std::size_t matching_positions(const EmbeddedRecord& a, const EmbeddedRecord& b) {
    if (a.size() != b.size()) throw std::invalid_argument("embedding sizes differ");
    std::size_t same = 0;
    for (std::size_t i = 0; i < a.size(); ++i) same += a.values[i] == b.values[i];
    return same;
}

/// Braun-Blanquet similarity of two size-t embedded sets: |f(x) ∩ f(y)| / t.
inline double bb_similarity(const EmbeddedRecord& a, const EmbeddedRecord& b) {
    const std::size_t same = matching_positions(a, b);
    return a.size() == 0 ? 1.0 : static_cast<double>(same) / static_cast<double>(a.size());
}

}  // namespace cpsj
