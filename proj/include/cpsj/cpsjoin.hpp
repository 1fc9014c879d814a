#pragma once

// Chosen Path Set Similarity Join.
//
// One run recursively splits the record set on randomly chosen embedded
// elements (i, h_i(x)); a record survives into the bucket of an element with
// probability 1/(lambda t), so a pair travels together down a path with
// probability governed by its embedded similarity. Before every split a
// brute-force step handles small nodes exhaustively and pulls out records
// whose expected work would not shrink by splitting further.
//
// Two engines share that skeleton:
//   * reference: exact element count map, restart-after-removal, one hash
//     r(e) per node evaluated on every embedded element;
//   * heuristic (default): Bernoulli-sampled positions of [t], an aggregate
//     1-bit sketch of the node to estimate average similarity, one batched
//     removal pass per node.
//
// Every reported pair is verified exactly; randomness only affects recall.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cpsj/dataset.hpp"
#include "cpsj/embedding.hpp"
#include "cpsj/hashing.hpp"
#include "cpsj/join.hpp"
#include "cpsj/sketching.hpp"

namespace cpsj {

struct JoinParams {
    double lambda = 0.5;
    double epsilon = 0.1;
    std::size_t limit = 250;
    double delta = 0.05;
    bool use_sketch_filter = true;
    bool use_heuristics = true;
    std::uint64_t seed = 1;

    void validate() const {
        if (!(lambda > 0.0 && lambda < 1.0)) throw std::invalid_argument("lambda must lie in (0,1)");
        if (!(epsilon >= 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must lie in [0,1)");
        if (limit < 1) throw std::invalid_argument("limit must be at least 1");
        if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0,1)");
    }
};

/// Record ids at one node of the recursion.
struct WorkingSet {
    std::vector<RecordId> member_ids;
    std::size_t depth = 0;
};

/// Per-record embeddings and sketches, built once per dataset load.
struct Preprocessed {
    std::vector<EmbeddedRecord> embedded;
    std::vector<Sketch> sketches;
};

struct PreprocessParams {
    std::size_t t = EmbeddingScheme::kDefaultSize;
    std::size_t ell = SketchScheme::kDefaultWords;
    std::uint64_t seed = 1;
};

/// Embeds and sketches every record. The two schemes draw from independent
/// streams derived from `params.seed`. Either part can be skipped by passing
/// a size of zero.
inline Preprocessed preprocess(const Dataset& ds, const PreprocessParams& params) {
    Preprocessed out;
    if (params.t > 0) out.embedded = embed_all(EmbeddingScheme(params.t, derive_seed(params.seed, 1)), ds);
    if (params.ell > 0) out.sketches = sketch_all(SketchScheme(params.ell, derive_seed(params.seed, 2)), ds);
    return out;
}

/// Inclusion probability of an embedded element at a split, min(1, 1/(lambda t)).
inline double split_probability(double lambda, std::size_t t) noexcept {
    return std::min(1.0, 1.0 / (lambda * static_cast<double>(t)));
}

/// Builds the node sketch: bit i is bit i of the sketch of a record drawn
/// uniformly (with replacement) from `ids`.
inline Sketch aggregate_sketch(std::span<const RecordId> ids, std::span<const Sketch> sketches, RandomSource& rng) {
    const std::size_t words = sketches[ids.front()].words.size();
    Sketch agg{std::vector<std::uint64_t>(words, 0)};
    for (std::size_t i = 0; i < words * 64; ++i) {
        const RecordId pick = ids[rng.uniform(ids.size())];
        agg.words[i / 64] |= sketches[pick].words[i / 64] & (std::uint64_t{1} << (i % 64));
    }
    return agg;
}

/// Count-map form of the removal score: for each member x,
/// (1/(|S|-1)) * sum_i (count[(i, x_i)] - 1) / t, which equals the average
/// embedded similarity of x to the rest of the node.
inline std::vector<double> reference_scores(std::span<const RecordId> ids, std::span<const EmbeddedRecord> embedded) {
    std::vector<double> scores(ids.size(), 0.0);
    if (ids.size() < 2) return scores;
    const std::size_t t = embedded[ids.front()].size();
    std::vector<std::unordered_map<Token, std::uint32_t>> count(t);
    for (RecordId x : ids) {
        for (std::size_t i = 0; i < t; ++i) ++count[i][embedded[x].values[i]];
    }
    const double denom = static_cast<double>(t) * static_cast<double>(ids.size() - 1);
    for (std::size_t k = 0; k < ids.size(); ++k) {
        std::uint64_t shared = 0;
        for (std::size_t i = 0; i < t; ++i) shared += count[i][embedded[ids[k]].values[i]] - 1;
        scores[k] = static_cast<double>(shared) / denom;
    }
    return scores;
}

/// State of a single join run. Exposes the individual steps for testing;
/// `run()` drives the whole recursion.
class ChosenPathJoin {
public:
    ChosenPathJoin(const Dataset& dataset, std::span<const EmbeddedRecord> embedded, std::span<const Sketch> sketches,
                   const JoinParams& params, RandomSource& rng, std::span<const std::uint8_t> origin = {})
        : dataset_(dataset),
          embedded_(embedded),
          sketches_(sketches),
          params_(params),
          rng_(rng),
          lambda_(params.lambda) {
        params.validate();
        if (embedded.size() != dataset.size()) throw std::invalid_argument("embeddings not aligned with dataset");
        const bool need_sketches = params.use_sketch_filter || params.use_heuristics;
        if (need_sketches && sketches.size() != dataset.size()) {
            throw std::invalid_argument("sketches not aligned with dataset");
        }
        if (!embedded.empty()) {
            t_ = embedded.front().size();
            for (const auto& e : embedded) {
                if (e.size() != t_) throw std::invalid_argument("embeddings of mixed size");
            }
        }
        if (params.use_sketch_filter && !sketches.empty()) {
            filter_ = pass_threshold(params.lambda, params.delta, sketches.front().bits());
        }
        verifier_.emplace(dataset, lambda_, sketches, params.use_sketch_filter ? &filter_ : nullptr, metrics_, raw_,
                          origin);
    }

    ChosenPathJoin(const ChosenPathJoin&) = delete;
    ChosenPathJoin& operator=(const ChosenPathJoin&) = delete;

    JoinOutcome run() {
        const auto start = std::chrono::steady_clock::now();
        if (dataset_.size() >= 2) {
            WorkingSet root;
            root.member_ids.resize(dataset_.size());
            for (std::size_t i = 0; i < dataset_.size(); ++i) root.member_ids[i] = static_cast<RecordId>(i);
            std::vector<WorkingSet> stack;
            stack.push_back(std::move(root));
            while (!stack.empty()) {
                WorkingSet node = std::move(stack.back());
                stack.pop_back();
                metrics_.max_depth = std::max<std::uint64_t>(metrics_.max_depth, node.depth);
                std::vector<RecordId> survivors = brute_force(std::move(node.member_ids));
                if (survivors.size() < 2) continue;
                std::vector<WorkingSet> children = split(survivors, node.depth + 1);
                for (auto it = children.rbegin(); it != children.rend(); ++it) stack.push_back(std::move(*it));
            }
        }
        JoinOutcome out;
        out.pairs = dedupe_results(std::move(raw_));
        out.metrics = metrics_;
        out.metrics.results = out.pairs.size();
        out.metrics.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return out;
    }

    /// Brute-force step. Returns the members left for splitting (empty if the
    /// node was solved exhaustively).
    std::vector<RecordId> brute_force(std::vector<RecordId> ids) {
        return params_.use_heuristics ? brute_force_sampled(std::move(ids)) : brute_force_exact(std::move(ids));
    }

    /// Splitting step: buckets of size >= 2 at the given depth, in a
    /// deterministic order.
    std::vector<WorkingSet> split(std::span<const RecordId> ids, std::size_t depth) {
        return params_.use_heuristics ? split_sampled(ids, depth) : split_hashed(ids, depth);
    }

    const Metrics& metrics() const noexcept { return metrics_; }
    const std::vector<Pair>& raw_pairs() const noexcept { return raw_; }

private:
    double removal_bar() const noexcept { return (1.0 - params_.epsilon) * params_.lambda; }

    std::vector<RecordId> brute_force_exact(std::vector<RecordId> ids) {
        if (ids.size() <= params_.limit) {
            brute_force_pairs(ids, *verifier_);
            return {};
        }
        std::vector<std::unordered_map<Token, std::uint32_t>> count(t_);
        for (RecordId x : ids) {
            for (std::size_t i = 0; i < t_; ++i) ++count[i][embedded_[x].values[i]];
        }
        const double bar = removal_bar();
        for (;;) {
            if (ids.size() <= params_.limit) {
                brute_force_pairs(ids, *verifier_);
                return {};
            }
            const double denom = static_cast<double>(t_) * static_cast<double>(ids.size() - 1);
            auto flagged = ids.end();
            for (auto it = ids.begin(); it != ids.end(); ++it) {
                std::uint64_t shared = 0;
                for (std::size_t i = 0; i < t_; ++i) shared += count[i][embedded_[*it].values[i]] - 1;
                if (static_cast<double>(shared) / denom > bar) {
                    flagged = it;
                    break;
                }
            }
            if (flagged == ids.end()) return ids;
            const RecordId x = *flagged;
            brute_force_point(x, ids, *verifier_);
            for (std::size_t i = 0; i < t_; ++i) --count[i][embedded_[x].values[i]];
            ids.erase(flagged);
        }
    }

    std::vector<RecordId> brute_force_sampled(std::vector<RecordId> ids) {
        if (ids.size() <= params_.limit) {
            brute_force_pairs(ids, *verifier_);
            return {};
        }
        const Sketch node = aggregate_sketch(ids, sketches_, rng_);
        const double bar = removal_bar();
        std::vector<char> removed(ids.size(), 0);
        std::vector<RecordId> rest;
        bool any = false;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (estimate_similarity(sketches_[ids[k]], node) > bar) {
                removed[k] = 1;
                any = true;
            }
        }
        if (!any) return ids;
        // Each flagged record is compared against the node minus the flagged
        // records already handled, then all of them leave together.
        std::vector<char> handled(ids.size(), 0);
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (!removed[k]) continue;
            for (std::size_t m = 0; m < ids.size(); ++m) {
                if (m != k && !handled[m]) verifier_->compare(ids[k], ids[m]);
            }
            handled[k] = 1;
        }
        rest.reserve(ids.size());
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (!removed[k]) rest.push_back(ids[k]);
        }
        if (rest.size() <= params_.limit) {
            brute_force_pairs(rest, *verifier_);
            return {};
        }
        return rest;
    }

    std::vector<WorkingSet> split_sampled(std::span<const RecordId> ids, std::size_t depth) {
        const double p = split_probability(params_.lambda, t_);
        std::vector<WorkingSet> children;
        std::vector<std::pair<Token, RecordId>> keyed(ids.size());
        for (std::size_t i = 0; i < t_; ++i) {
            if (!rng_.bernoulli(p)) continue;
            for (std::size_t k = 0; k < ids.size(); ++k) keyed[k] = {embedded_[ids[k]].values[i], ids[k]};
            std::sort(keyed.begin(), keyed.end());
            emit_groups(keyed, depth, children);
        }
        return children;
    }

    std::vector<WorkingSet> split_hashed(std::span<const RecordId> ids, std::size_t depth) {
        const double p = split_probability(params_.lambda, t_);
        const std::uint64_t r = rng_.next();
        auto chosen = [&](std::uint64_t element) {
            return p >= 1.0 || static_cast<double>(mix64(r ^ element) >> 11) * 0x1.0p-53 < p;
        };
        std::vector<std::pair<std::uint64_t, RecordId>> keyed;
        for (RecordId x : ids) {
            for (std::size_t i = 0; i < t_; ++i) {
                const std::uint64_t element = (std::uint64_t{i} << 32) | embedded_[x].values[i];
                if (chosen(element)) keyed.emplace_back(element, x);
            }
        }
        std::sort(keyed.begin(), keyed.end());
        std::vector<WorkingSet> children;
        emit_groups(keyed, depth, children);
        return children;
    }

    template <typename Key>
    static void emit_groups(const std::vector<std::pair<Key, RecordId>>& keyed, std::size_t depth,
                            std::vector<WorkingSet>& children) {
        std::size_t begin = 0;
        while (begin < keyed.size()) {
            std::size_t end = begin + 1;
            while (end < keyed.size() && keyed[end].first == keyed[begin].first) ++end;
            if (end - begin >= 2) {
                WorkingSet child;
                child.depth = depth;
                child.member_ids.reserve(end - begin);
                for (std::size_t k = begin; k < end; ++k) child.member_ids.push_back(keyed[k].second);
                children.push_back(std::move(child));
            }
            begin = end;
        }
    }

    const Dataset& dataset_;
    std::span<const EmbeddedRecord> embedded_;
    std::span<const Sketch> sketches_;
    JoinParams params_;
    RandomSource& rng_;
    SimilarityThreshold lambda_;
    std::size_t t_ = 0;
    PassThreshold filter_;
    Metrics metrics_;
    std::vector<Pair> raw_;
    std::optional<Verifier> verifier_;
};

/// One independent repetition of the join, randomness drawn from `rng`.
inline JoinOutcome cpsjoin(const Dataset& dataset, std::span<const EmbeddedRecord> embedded,
                           std::span<const Sketch> sketches, const JoinParams& params, RandomSource& rng,
                           std::span<const std::uint8_t> origin = {}) {
    return ChosenPathJoin(dataset, embedded, sketches, params, rng, origin).run();
}

/// As above with the run seeded from `params.seed`.
inline JoinOutcome cpsjoin(const Dataset& dataset, const Preprocessed& prep, const JoinParams& params,
                           std::span<const std::uint8_t> origin = {}) {
    RandomSource rng(params.seed);
    return cpsjoin(dataset, prep.embedded, prep.sketches, params, rng, origin);
}

}  // namespace cpsj
