#pragma once

// Shared join vocabulary: result pairs, counters and the
// filter -> verify -> emit pipeline every join algorithm runs candidate
// pairs through.

#include <algorithm>
#include <compare>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "cpsj/dataset.hpp"
#include "cpsj/sketching.hpp"

namespace cpsj {

/// A result pair of record indices, canonical when a < b.
struct Pair {
    RecordId a = 0;
    RecordId b = 0;

    friend bool operator==(const Pair&, const Pair&) = default;
    friend auto operator<=>(const Pair&, const Pair&) = default;
};

inline Pair canonical_pair(RecordId x, RecordId y) noexcept { return x < y ? Pair{x, y} : Pair{y, x}; }

struct Metrics {
    std::uint64_t pre_candidates = 0;  // pairs generated, before the sketch filter
    std::uint64_t candidates = 0;      // pairs that reached exact verification
    std::uint64_t results = 0;         // distinct pairs reported
    std::uint64_t max_depth = 0;
    double wall_time = 0.0;  // seconds

    friend bool operator==(const Metrics&, const Metrics&) = default;
};

struct JoinOutcome {
    std::vector<Pair> pairs;
    Metrics metrics;
};

/// Sorts and drops adjacent duplicates, in place.
inline void dedupe_results(std::vector<Pair>& pairs) {
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
}

inline std::vector<Pair> dedupe_results(std::vector<Pair>&& pairs) {
    dedupe_results(pairs);
    return std::move(pairs);
}

/// Runs candidate pairs through the optional sketch filter and exact
/// verification, updating counters and collecting verified pairs.
///
/// When `origin` is non-empty only pairs with differing origin tags are
/// considered at all; this is how an R ⋈ S join rides on the self-join code.
class Verifier {
public:
    Verifier(const Dataset& dataset, SimilarityThreshold lambda, std::span<const Sketch> sketches,
             const PassThreshold* filter, Metrics& metrics, std::vector<Pair>& out,
             std::span<const std::uint8_t> origin = {})
        : dataset_(dataset),
          lambda_(lambda),
          sketches_(sketches),
          filter_(filter),
          metrics_(metrics),
          out_(out),
          origin_(origin) {
        if (filter_ && sketches_.size() != dataset_.size()) {
            throw std::invalid_argument("sketch filter needs one sketch per record");
        }
        if (!origin_.empty() && origin_.size() != dataset_.size()) {
            throw std::invalid_argument("origin tags must cover every record");
        }
    }

    bool considers(RecordId x, RecordId y) const noexcept { return origin_.empty() || origin_[x] != origin_[y]; }

    void compare(RecordId x, RecordId y) {
        if (!considers(x, y)) return;
        ++metrics_.pre_candidates;
        if (filter_ && matching_bits(sketches_[x], sketches_[y]) < filter_->min_matching_bits) return;
        ++metrics_.candidates;
        if (verify_pair(dataset_[x], dataset_[y], lambda_)) out_.push_back(canonical_pair(x, y));
    }

    const SimilarityThreshold& lambda() const noexcept { return lambda_; }

private:
    const Dataset& dataset_;
    SimilarityThreshold lambda_;
    std::span<const Sketch> sketches_;
    const PassThreshold* filter_;
    Metrics& metrics_;
    std::vector<Pair>& out_;
    std::span<const std::uint8_t> origin_;
};

/// Compares every unordered pair of `ids`.
inline void brute_force_pairs(std::span<const RecordId> ids, Verifier& verifier) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
        for (std::size_t j = i + 1; j < ids.size(); ++j) verifier.compare(ids[i], ids[j]);
    }
}

/// Compares `x` against every other member of `ids`.
inline void brute_force_point(RecordId x, std::span<const RecordId> ids, Verifier& verifier) {
    for (RecordId y : ids) {
        if (y != x) verifier.compare(x, y);
    }
}

}  // namespace cpsj
