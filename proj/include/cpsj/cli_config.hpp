#pragma once

// Settings shared by the command-line front end and its tests.

#include <cstdint>
#include <cstdlib>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpsj/baselines.hpp"
#include "cpsj/cpsjoin.hpp"
#include "cpsj/harness.hpp"

namespace cpsj {

/// Process exit codes of the `cpsj` tool.
enum ExitCode : int {
    kExitOk = 0,
    kExitIo = 1,
    kExitUsage = 2,
    kExitRecallNotReached = 3,
    kExitParse = 4,
    kExitTruthMismatch = 5,
};

inline constexpr const char* kSeedEnv = "CPSJ_SEED";

/// Seed used when --seed is absent: $CPSJ_SEED if set, else 1.
inline std::uint64_t default_seed() {
    const char* env = std::getenv(kSeedEnv);
    if (!env || !*env) return 1;
    std::size_t used = 0;
    const unsigned long long value = std::stoull(env, &used, 10);
    if (env[used] != '\0') throw std::invalid_argument(std::string(kSeedEnv) + " is not an unsigned integer");
    return value;
}

struct CliConfig {
    std::string subcommand;
    std::vector<std::string> inputs;
    double lambda = 0.5;
    std::string algorithm = "cpsjoin";
    std::size_t t = EmbeddingScheme::kDefaultSize;
    std::size_t ell = SketchScheme::kDefaultWords;
    double delta = 0.05;
    double epsilon = 0.1;
    std::size_t limit = 250;
    std::size_t k = 0;  // 0: tune
    std::size_t L = 0;  // 0: derive from phi
    bool fixed_L = false;
    double phi = 0.9;
    bool phi_given = false;
    std::size_t max_reps = 32;
    std::uint64_t seed = 1;
    bool no_sketch_filter = false;
    bool reference_mode = false;
    bool tokenize = false;
    unsigned threads = 1;
    std::string truth;
    std::string output;
    std::string pairs_out;
    std::string format = "csv";

    void validate() const {
        if (!(lambda > 0.0 && lambda < 1.0)) throw std::invalid_argument("--lambda must lie in (0,1)");
        parse_algorithm(algorithm);
        if (t < 1) throw std::invalid_argument("--t must be at least 1");
        if (ell < 1) throw std::invalid_argument("--ell must be at least 1");
        if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("--delta must lie in (0,1)");
        if (!(epsilon >= 0.0 && epsilon < 1.0)) throw std::invalid_argument("--epsilon must lie in [0,1)");
        if (limit < 1) throw std::invalid_argument("--limit must be at least 1");
        if (k > kMaxLshK) throw std::invalid_argument("--k must be at most " + std::to_string(kMaxLshK));
        if (!(phi > 0.0 && phi < 1.0)) throw std::invalid_argument("--phi must lie in (0,1)");
        if (max_reps < 1) throw std::invalid_argument("--max-reps must be at least 1");
        if (threads < 1) throw std::invalid_argument("--threads must be at least 1");
        parse_report_format(format);
    }

    /// Algorithm settings for one dataset load. Randomized minhash runs use
    /// one bucketing pass per repetition unless L is fixed.
    AlgorithmConfig algorithm_config() const {
        AlgorithmConfig cfg;
        cfg.algorithm = parse_algorithm(algorithm);
        cfg.join.lambda = lambda;
        cfg.join.epsilon = epsilon;
        cfg.join.limit = limit;
        cfg.join.delta = delta;
        cfg.join.use_sketch_filter = !no_sketch_filter;
        cfg.join.use_heuristics = !reference_mode;
        cfg.join.seed = seed;
        cfg.lsh.k = k;
        cfg.lsh.L = fixed_L ? L : (L == 0 ? 1 : L);
        cfg.lsh.phi_target = phi;
        cfg.lsh.seed = seed;
        cfg.prep.t = t;
        cfg.prep.ell = ell;
        cfg.prep.seed = seed;
        return cfg;
    }

    nlohmann::json to_json() const {
        return nlohmann::json{{"lambda", lambda},   {"algorithm", algorithm}, {"t", t},
                              {"ell", ell},         {"delta", delta},         {"epsilon", epsilon},
                              {"limit", limit},     {"k", k == 0 ? nlohmann::json("auto") : nlohmann::json(k)},
                              {"phi", phi},         {"max_reps", max_reps},   {"seed", seed},
                              {"threads", threads}, {"format", format}};
    }
};

}  // namespace cpsj
