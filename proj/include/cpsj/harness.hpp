#pragma once

// Measurement harness: ground-truth files, repetition until a recall target,
// R ⋈ S via a tagged self-join, and CSV / JSON run reports.

#include <algorithm>
#include <array>
#include <bit>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpsj/baselines.hpp"
#include "cpsj/cpsjoin.hpp"
#include "cpsj/dataset.hpp"
#include "cpsj/join.hpp"

namespace cpsj {

// ---------------------------------------------------------------------------
// Ground truth

class GroundTruthError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a recall-driven run has nothing to measure against.
class MissingGroundTruth : public std::runtime_error {
public:
    MissingGroundTruth()
        : std::runtime_error(
              "no ground truth available: generate one with `cpsj groundtruth <input> --lambda L -o FILE` "
              "and pass it with --truth FILE") {}
};

struct GroundTruth {
    std::vector<Pair> pairs;
    double lambda = 0.0;
    std::uint64_t fingerprint = 0;

    friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

inline GroundTruth make_ground_truth(const Dataset& ds, double lambda) {
    return GroundTruth{exact_join(ds, lambda).pairs, lambda, fingerprint(ds)};
}

/// Binary layout, all little-endian:
///   0  char[4]  "CPGT"
///   4  u32      version (1)
///   8  f64      lambda (IEEE-754 bits)
///  16  u64      dataset fingerprint
///  24  u64      pair count
///  32  u64      FNV-1a checksum of the pair payload
///  40  {u32 a, u32 b} * count, sorted, a < b
inline constexpr std::array<char, 4> kGroundTruthMagic{'C', 'P', 'G', 'T'};
inline constexpr std::uint32_t kGroundTruthVersion = 1;
inline constexpr std::size_t kGroundTruthHeaderBytes = 40;

namespace detail {

inline void put_le(std::string& buf, std::uint64_t value, int bytes) {
    for (int b = 0; b < bytes; ++b) buf.push_back(static_cast<char>((value >> (8 * b)) & 0xffU));
}

inline std::uint64_t get_le(const std::string& buf, std::size_t offset, int bytes) {
    std::uint64_t value = 0;
    for (int b = 0; b < bytes; ++b) {
        value |= std::uint64_t{static_cast<unsigned char>(buf[offset + b])} << (8 * b);
    }
    return value;
}

inline std::uint64_t fnv1a(std::string_view bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace detail

inline std::string serialize_ground_truth(const GroundTruth& gt) {
    std::string payload;
    payload.reserve(gt.pairs.size() * 8);
    for (const Pair& p : gt.pairs) {
        detail::put_le(payload, p.a, 4);
        detail::put_le(payload, p.b, 4);
    }
    std::string out(kGroundTruthMagic.begin(), kGroundTruthMagic.end());
    detail::put_le(out, kGroundTruthVersion, 4);
    detail::put_le(out, std::bit_cast<std::uint64_t>(gt.lambda), 8);
    detail::put_le(out, gt.fingerprint, 8);
    detail::put_le(out, gt.pairs.size(), 8);
    detail::put_le(out, detail::fnv1a(payload), 8);
    out += payload;
    return out;
}

inline GroundTruth deserialize_ground_truth(const std::string& bytes) {
    if (bytes.size() < kGroundTruthHeaderBytes || !std::equal(kGroundTruthMagic.begin(), kGroundTruthMagic.end(), bytes.begin())) {
        throw GroundTruthError("not a ground-truth file (bad magic)");
    }
    const auto version = detail::get_le(bytes, 4, 4);
    if (version != kGroundTruthVersion) {
        throw GroundTruthError("unsupported ground-truth version " + std::to_string(version));
    }
    GroundTruth gt;
    gt.lambda = std::bit_cast<double>(detail::get_le(bytes, 8, 8));
    gt.fingerprint = detail::get_le(bytes, 16, 8);
    const std::uint64_t count = detail::get_le(bytes, 24, 8);
    const std::uint64_t checksum = detail::get_le(bytes, 32, 8);
    if (bytes.size() - kGroundTruthHeaderBytes != count * 8) {
        throw GroundTruthError("ground-truth file truncated or padded: expected " + std::to_string(count) + " pairs");
    }
    if (detail::fnv1a(std::string_view(bytes).substr(kGroundTruthHeaderBytes)) != checksum) {
        throw GroundTruthError("ground-truth payload checksum mismatch (corrupted file)");
    }
    gt.pairs.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::size_t off = kGroundTruthHeaderBytes + i * 8;
        Pair p{static_cast<RecordId>(detail::get_le(bytes, off, 4)), static_cast<RecordId>(detail::get_le(bytes, off + 4, 4))};
        if (p.a >= p.b || (!gt.pairs.empty() && !(gt.pairs.back() < p))) {
            throw GroundTruthError("ground-truth pairs are not canonical");
        }
        gt.pairs.push_back(p);
    }
    return gt;
}

inline nlohmann::json ground_truth_sidecar(const GroundTruth& gt) {
    const std::string bytes = serialize_ground_truth(gt);
    return nlohmann::json{{"format", "cpsj-groundtruth"},
                          {"version", kGroundTruthVersion},
                          {"lambda", gt.lambda},
                          {"fingerprint", detail::hex64(gt.fingerprint)},
                          {"pairs", gt.pairs.size()},
                          {"checksum", detail::hex64(detail::get_le(bytes, 32, 8))}};
}

/// Writes `path` and a human-readable `path.json` next to it.
inline void save_ground_truth(const GroundTruth& gt, const std::filesystem::path& path) {
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
        const std::string bytes = serialize_ground_truth(gt);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("failed writing " + path.string());
    }
    std::filesystem::path sidecar = path;
    sidecar += ".json";
    std::ofstream side(sidecar, std::ios::trunc);
    if (!side) throw std::runtime_error("cannot open " + sidecar.string() + " for writing");
    side << ground_truth_sidecar(gt).dump(2) << '\n';
}

inline GroundTruth load_ground_truth(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open ground truth " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return deserialize_ground_truth(buf.str());
}

/// Rejects ground truth built for a different dataset or threshold.
inline void check_ground_truth(const GroundTruth& gt, const Dataset& ds, double lambda) {
    if (gt.fingerprint != fingerprint(ds)) {
        throw GroundTruthError("ground truth fingerprint " + detail::hex64(gt.fingerprint) +
                               " does not match dataset fingerprint " + detail::hex64(fingerprint(ds)));
    }
    if (gt.lambda != lambda) {
        throw GroundTruthError("ground truth was built for lambda " + std::to_string(gt.lambda) + ", not " +
                               std::to_string(lambda));
    }
    for (const Pair& p : gt.pairs) {
        if (p.b >= ds.size()) throw GroundTruthError("ground truth references a record outside the dataset");
    }
}

/// |found ∩ truth| / |truth| over sorted pair lists; 1.0 when truth is empty.
inline double recall(std::span<const Pair> found, std::span<const Pair> truth) {
    if (truth.empty()) return 1.0;
    std::size_t i = 0, j = 0, hit = 0;
    while (i < found.size() && j < truth.size()) {
        if (found[i] == truth[j]) {
            ++hit;
            ++i;
            ++j;
        } else if (found[i] < truth[j]) {
            ++i;
        } else {
            ++j;
        }
    }
    return static_cast<double>(hit) / static_cast<double>(truth.size());
}

// ---------------------------------------------------------------------------
// Reports

struct RepetitionRow {
    std::size_t rep = 0;  // 1-based
    std::uint64_t seed = 0;
    Metrics metrics;
    std::uint64_t cum_results = 0;
    std::optional<double> cum_recall;

    friend bool operator==(const RepetitionRow&, const RepetitionRow&) = default;
};

struct RunReport {
    std::string algorithm;
    nlohmann::json params = nlohmann::json::object();
    std::optional<double> phi_target;
    std::optional<std::uint64_t> truth_pairs;
    bool target_reached = false;
    std::size_t repetitions_used = 0;
    double total_wall_time = 0.0;
    std::vector<RepetitionRow> repetitions;

    friend bool operator==(const RunReport&, const RunReport&) = default;
};

inline constexpr std::string_view kCsvHeader =
    "rep,pre_candidates,candidates,results,cum_results,cum_recall,max_depth,seconds";

namespace detail {

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

}  // namespace detail

inline nlohmann::json report_to_json(const RunReport& r) {
    nlohmann::json reps = nlohmann::json::array();
    for (const auto& row : r.repetitions) {
        reps.push_back({{"rep", row.rep},
                        {"seed", row.seed},
                        {"pre_candidates", row.metrics.pre_candidates},
                        {"candidates", row.metrics.candidates},
                        {"results", row.metrics.results},
                        {"cum_results", row.cum_results},
                        {"cum_recall", detail::optional_json(row.cum_recall)},
                        {"max_depth", row.metrics.max_depth},
                        {"seconds", row.metrics.wall_time}});
    }
    return nlohmann::json{{"algorithm", r.algorithm},
                          {"params", r.params},
                          {"phi_target", detail::optional_json(r.phi_target)},
                          {"truth_pairs", r.truth_pairs ? nlohmann::json(*r.truth_pairs) : nlohmann::json()},
                          {"target_reached", r.target_reached},
                          {"repetitions_used", r.repetitions_used},
                          {"total_seconds", r.total_wall_time},
                          {"repetitions", reps}};
}

inline RunReport report_from_json(const nlohmann::json& j) {
    RunReport r;
    r.algorithm = j.at("algorithm").get<std::string>();
    r.params = j.at("params");
    if (!j.at("phi_target").is_null()) r.phi_target = j.at("phi_target").get<double>();
    if (!j.at("truth_pairs").is_null()) r.truth_pairs = j.at("truth_pairs").get<std::uint64_t>();
    r.target_reached = j.at("target_reached").get<bool>();
    r.repetitions_used = j.at("repetitions_used").get<std::size_t>();
    r.total_wall_time = j.at("total_seconds").get<double>();
    for (const auto& row : j.at("repetitions")) {
        RepetitionRow out;
        out.rep = row.at("rep").get<std::size_t>();
        out.seed = row.at("seed").get<std::uint64_t>();
        out.metrics.pre_candidates = row.at("pre_candidates").get<std::uint64_t>();
        out.metrics.candidates = row.at("candidates").get<std::uint64_t>();
        out.metrics.results = row.at("results").get<std::uint64_t>();
        out.metrics.max_depth = row.at("max_depth").get<std::uint64_t>();
        out.metrics.wall_time = row.at("seconds").get<double>();
        out.cum_results = row.at("cum_results").get<std::uint64_t>();
        if (!row.at("cum_recall").is_null()) out.cum_recall = row.at("cum_recall").get<double>();
        r.repetitions.push_back(out);
    }
    return r;
}

enum class ReportFormat { csv, json };

inline ReportFormat parse_report_format(std::string_view name) {
    if (name == "csv") return ReportFormat::csv;
    if (name == "json") return ReportFormat::json;
    throw std::invalid_argument("unknown report format '" + std::string(name) + "' (expected csv or json)");
}

inline std::string write_report(const RunReport& r, ReportFormat format) {
    if (format == ReportFormat::json) return report_to_json(r).dump(2) + "\n";
    std::string out(kCsvHeader);
    out += '\n';
    for (const auto& row : r.repetitions) {
        out += std::to_string(row.rep) + ',' + std::to_string(row.metrics.pre_candidates) + ',' +
               std::to_string(row.metrics.candidates) + ',' + std::to_string(row.metrics.results) + ',' +
               std::to_string(row.cum_results) + ',' + (row.cum_recall ? detail::format_double(*row.cum_recall) : "") +
               ',' + std::to_string(row.metrics.max_depth) + ',' + detail::format_double(row.metrics.wall_time) + '\n';
    }
    return out;
}

inline std::string write_report(const RunReport& r, std::string_view format) {
    return write_report(r, parse_report_format(format));
}

/// Parses the per-repetition rows of a CSV report (seeds are not part of
/// the CSV and come back as zero).
inline std::vector<RepetitionRow> read_report_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader) throw std::invalid_argument("missing CSV report header");
    std::vector<RepetitionRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (line.back() == ',') cells.emplace_back();
        if (cells.size() != 8) throw std::invalid_argument("CSV report row has " + std::to_string(cells.size()) + " cells");
        RepetitionRow row;
        row.rep = std::stoull(cells[0]);
        row.metrics.pre_candidates = std::stoull(cells[1]);
        row.metrics.candidates = std::stoull(cells[2]);
        row.metrics.results = std::stoull(cells[3]);
        row.cum_results = std::stoull(cells[4]);
        if (!cells[5].empty()) row.cum_recall = std::stod(cells[5]);
        row.metrics.max_depth = std::stoull(cells[6]);
        row.metrics.wall_time = std::stod(cells[7]);
        rows.push_back(row);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Repetition driver

struct RunOptions {
    std::size_t max_reps = 32;
    std::optional<double> phi_target;  // stop once cumulative recall reaches it
    std::uint64_t seed = 1;
    unsigned threads = 1;
};

struct RunResult {
    RunReport report;
    std::vector<Pair> pairs;  // union over all repetitions
};

/// Seed of repetition `rep` (1-based) under master seed `master`.
inline std::uint64_t repetition_seed(std::uint64_t master, std::size_t rep) noexcept { return derive_seed(master, rep); }

/// Runs repetitions of `once(seed)` and accumulates the union of their pairs.
///
/// Repetitions may be computed `threads` at a time, but merging and the stop
/// decision happen strictly in repetition order, so the report depends only
/// on the master seed.
template <typename Repetition>
RunResult run_repetitions(std::string algorithm, nlohmann::json params, Repetition&& once, const GroundTruth* truth,
                          const RunOptions& options) {
    if (options.max_reps < 1) throw std::invalid_argument("max_reps must be at least 1");
    if (options.phi_target && !truth) throw MissingGroundTruth();
    const auto start = std::chrono::steady_clock::now();
    RunResult result;
    RunReport& report = result.report;
    report.algorithm = std::move(algorithm);
    report.params = std::move(params);
    report.phi_target = options.phi_target;
    if (truth) report.truth_pairs = truth->pairs.size();

    const unsigned threads = std::max(1U, options.threads);
    std::size_t rep = 1;
    bool done = false;
    while (!done && rep <= options.max_reps) {
        const std::size_t batch = std::min<std::size_t>(threads, options.max_reps - rep + 1);
        std::vector<JoinOutcome> outcomes(batch);
        if (batch == 1) {
            outcomes[0] = once(repetition_seed(options.seed, rep));
        } else {
            std::vector<std::thread> workers;
            for (std::size_t b = 0; b < batch; ++b) {
                workers.emplace_back([&, b] { outcomes[b] = once(repetition_seed(options.seed, rep + b)); });
            }
            for (auto& w : workers) w.join();
        }
        for (std::size_t b = 0; b < batch && !done; ++b, ++rep) {
            RepetitionRow row;
            row.rep = rep;
            row.seed = repetition_seed(options.seed, rep);
            row.metrics = outcomes[b].metrics;
            std::vector<Pair> merged;
            merged.reserve(result.pairs.size() + outcomes[b].pairs.size());
            std::set_union(result.pairs.begin(), result.pairs.end(), outcomes[b].pairs.begin(), outcomes[b].pairs.end(),
                           std::back_inserter(merged));
            result.pairs = std::move(merged);
            row.cum_results = result.pairs.size();
            if (truth) {
                row.cum_recall = recall(result.pairs, truth->pairs);
                if (options.phi_target && *row.cum_recall >= *options.phi_target) {
                    report.target_reached = true;
                    done = true;
                }
            }
            report.repetitions.push_back(row);
        }
    }
    report.repetitions_used = report.repetitions.size();
    report.total_wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

/// Repeats until the cumulative recall against `truth` reaches `phi_target`
/// or `max_reps` repetitions have run.
template <typename Repetition>
RunResult run_until_recall(std::string algorithm, nlohmann::json params, Repetition&& once, const GroundTruth* truth,
                           double phi_target, std::size_t max_reps, std::uint64_t seed, unsigned threads = 1) {
    if (!truth) throw MissingGroundTruth();
    RunOptions options;
    options.max_reps = max_reps;
    options.phi_target = phi_target;
    options.seed = seed;
    options.threads = threads;
    return run_repetitions(std::move(algorithm), std::move(params), std::forward<Repetition>(once), truth, options);
}

// ---------------------------------------------------------------------------
// Algorithms behind one interface

enum class Algorithm { cpsjoin, minhash, allpairs, naive };

inline std::string_view to_string(Algorithm a) noexcept {
    switch (a) {
        case Algorithm::cpsjoin: return "cpsjoin";
        case Algorithm::minhash: return "minhash";
        case Algorithm::allpairs: return "allpairs";
        case Algorithm::naive: return "naive";
    }
    return "?";
}

inline Algorithm parse_algorithm(std::string_view name) {
    if (name == "cpsjoin") return Algorithm::cpsjoin;
    if (name == "minhash") return Algorithm::minhash;
    if (name == "allpairs") return Algorithm::allpairs;
    if (name == "naive") return Algorithm::naive;
    throw std::invalid_argument("unknown algorithm '" + std::string(name) + "'");
}

inline bool is_exact(Algorithm a) noexcept { return a == Algorithm::allpairs || a == Algorithm::naive; }

struct AlgorithmConfig {
    Algorithm algorithm = Algorithm::cpsjoin;
    JoinParams join;     // lambda, epsilon, limit, delta, filter and engine switches
    LshParams lsh;       // k and L; lambda/delta/filter are taken from `join`
    PreprocessParams prep;
};

/// A dataset with its preprocessing, ready to run repetitions of one algorithm.
class JoinSession {
public:
    JoinSession(const Dataset& ds, AlgorithmConfig config, std::span<const std::uint8_t> origin = {})
        : ds_(ds), config_(std::move(config)), origin_(origin) {
        config_.join.validate();
        config_.lsh.lambda = config_.join.lambda;
        config_.lsh.delta = config_.join.delta;
        config_.lsh.use_sketch_filter = config_.join.use_sketch_filter;
        PreprocessParams prep = config_.prep;
        switch (config_.algorithm) {
            case Algorithm::cpsjoin:
                prep_ = preprocess(ds_, prep);
                break;
            case Algorithm::minhash:
                if (config_.lsh.use_sketch_filter) {
                    prep.t = 0;
                    prep_ = preprocess(ds_, prep);
                }
                if (config_.lsh.k == 0 || config_.lsh.L == 0) {
                    RandomSource rng(derive_seed(config_.prep.seed, 3));
                    config_.lsh = resolve_lsh_params(ds_, config_.lsh, rng);
                }
                break;
            default:
                break;
        }
    }

    const AlgorithmConfig& config() const noexcept { return config_; }
    const Preprocessed& preprocessed() const noexcept { return prep_; }

    /// One repetition with the given seed.
    JoinOutcome run(std::uint64_t seed) const {
        switch (config_.algorithm) {
            case Algorithm::cpsjoin: {
                JoinParams p = config_.join;
                p.seed = seed;
                return cpsjoin(ds_, prep_, p, origin_);
            }
            case Algorithm::minhash: {
                RandomSource rng(seed);
                return minhash_lsh_join(ds_, config_.lsh, prep_.sketches, rng, origin_);
            }
            case Algorithm::allpairs: return exact_join(ds_, config_.join.lambda, origin_);
            case Algorithm::naive: return naive_join(ds_, config_.join.lambda, origin_);
        }
        throw std::logic_error("unhandled algorithm");
    }

    /// Parameters echoed into reports.
    nlohmann::json params_json() const {
        nlohmann::json j{{"lambda", config_.join.lambda}};
        if (config_.algorithm == Algorithm::cpsjoin) {
            j["epsilon"] = config_.join.epsilon;
            j["limit"] = config_.join.limit;
            j["t"] = config_.prep.t;
            j["reference_mode"] = !config_.join.use_heuristics;
        }
        if (config_.algorithm == Algorithm::minhash) {
            j["k"] = config_.lsh.k;
            j["L"] = config_.lsh.L;
        }
        if (!is_exact(config_.algorithm)) {
            j["sketch_filter"] = config_.join.use_sketch_filter;
            j["ell"] = config_.prep.ell;
            j["delta"] = config_.join.delta;
            j["seed"] = config_.prep.seed;
        }
        return j;
    }

private:
    const Dataset& ds_;
    AlgorithmConfig config_;
    std::span<const std::uint8_t> origin_;
    Preprocessed prep_;
};

// ---------------------------------------------------------------------------
// R ⋈ S

/// A pair (index into R, index into S).
struct CrossPair {
    RecordId r = 0;
    RecordId s = 0;

    friend bool operator==(const CrossPair&, const CrossPair&) = default;
    friend auto operator<=>(const CrossPair&, const CrossPair&) = default;
};

struct RsJoinOutcome {
    std::vector<CrossPair> pairs;
    Metrics metrics;
};

/// Joins R against S by running the self-join machinery on R ∪ S with origin
/// tags, so only cross pairs are generated. One repetition, seeded by
/// `config.join.seed`.
inline RsJoinOutcome rs_join(const Dataset& r, const Dataset& s, const AlgorithmConfig& config) {
    std::vector<Record> records = r.records();
    records.insert(records.end(), s.records().begin(), s.records().end());
    const Dataset both = Dataset::from_records(std::move(records), false);
    std::vector<std::uint8_t> origin(both.size(), 0);
    std::fill(origin.begin() + static_cast<std::ptrdiff_t>(r.size()), origin.end(), std::uint8_t{1});

    const JoinSession session(both, config, origin);
    const JoinOutcome joined = session.run(config.join.seed);
    RsJoinOutcome out;
    out.metrics = joined.metrics;
    out.pairs.reserve(joined.pairs.size());
    const auto nr = static_cast<RecordId>(r.size());
    for (const Pair& p : joined.pairs) out.pairs.push_back({p.a, p.b - nr});
    std::sort(out.pairs.begin(), out.pairs.end());
    return out;
}

}  // namespace cpsj
