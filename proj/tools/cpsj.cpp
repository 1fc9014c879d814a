// cpsj: command-line front end for the set similarity join library.
//
// Exit codes: 0 success, 1 I/O error, 2 usage or configuration error,
// 3 recall target not reached (report still written), 4 input parse error,
// 5 ground truth does not match the input.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cpsj/baselines.hpp"
#include "cpsj/cli_config.hpp"
#include "cpsj/cpsjoin.hpp"
#include "cpsj/dataset.hpp"
#include "cpsj/harness.hpp"
#include "cpsj/synthetic.hpp"

namespace {

using namespace cpsj;

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FileParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

Dataset load(const std::string& path, bool tokenize) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    try {
        return parse_dataset(in, tokenize);
    } catch (const ParseError& e) {
        throw FileParseError(path + ": " + e.what());
    }
}

void emit(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text << std::flush;
        return;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << text;
    if (!out) throw IoError("failed writing " + path);
}

int cmd_stats(const CliConfig& cfg) {
    const Dataset ds = load(cfg.inputs.at(0), cfg.tokenize);
    std::uint32_t max_freq = 0;
    for (const auto& [tok, freq] : ds.token_frequency()) max_freq = std::max(max_freq, freq);
    const double avg = ds.empty() ? 0.0 : static_cast<double>(ds.total_tokens()) / static_cast<double>(ds.size());
    std::printf("n=%zu\navg_size=%.4f\ndistinct_tokens=%zu\nmax_token_frequency=%u\n", ds.size(), avg,
                ds.token_frequency().size(), max_freq);
    return kExitOk;
}

int cmd_groundtruth(const CliConfig& cfg) {
    if (cfg.output.empty()) throw std::invalid_argument("groundtruth needs -o FILE");
    const Dataset ds = load(cfg.inputs.at(0), cfg.tokenize);
    const GroundTruth gt = make_ground_truth(ds, cfg.lambda);
    try {
        save_ground_truth(gt, cfg.output);
    } catch (const std::runtime_error& e) {
        throw IoError(e.what());
    }
    std::printf("%zu\n", gt.pairs.size());
    return kExitOk;
}

std::string pair_lines(const Dataset& ds, const std::vector<Pair>& pairs) {
    std::string out;
    for (const Pair& p : pairs) {
        out += std::to_string(ds.source_line(p.a)) + ' ' + std::to_string(ds.source_line(p.b)) + '\n';
    }
    return out;
}

int cmd_join(const CliConfig& cfg) {
    const Dataset ds = load(cfg.inputs.at(0), cfg.tokenize);
    std::optional<GroundTruth> truth;
    if (!cfg.truth.empty()) {
        try {
            truth = load_ground_truth(cfg.truth);
        } catch (const GroundTruthError&) {
            throw;
        } catch (const std::runtime_error& e) {
            throw IoError(e.what());
        }
        check_ground_truth(*truth, ds, cfg.lambda);
    }
    const AlgorithmConfig acfg = cfg.algorithm_config();
    const bool exact = is_exact(acfg.algorithm);
    const bool single_pass = exact || (acfg.algorithm == Algorithm::minhash && cfg.fixed_L);
    if (cfg.phi_given && !truth && !single_pass) throw MissingGroundTruth();

    const JoinSession session(ds, acfg);
    RunOptions options;
    options.seed = cfg.seed;
    options.threads = cfg.threads;
    options.max_reps = single_pass ? 1 : cfg.max_reps;
    if (truth && !single_pass) options.phi_target = cfg.phi;
    const RunResult result = run_repetitions(
        std::string(to_string(acfg.algorithm)), session.params_json(),
        [&](std::uint64_t seed) { return session.run(seed); }, truth ? &*truth : nullptr, options);

    RunReport report = result.report;
    if (exact && !truth) {
        // An exact algorithm is its own ground truth.
        for (auto& row : report.repetitions) row.cum_recall = 1.0;
    }
    if (single_pass && truth) report.target_reached = report.repetitions.back().cum_recall >= cfg.phi;
    if (exact) report.target_reached = true;
    emit(cfg.output, write_report(report, cfg.format));
    if (!cfg.pairs_out.empty()) emit(cfg.pairs_out, pair_lines(ds, result.pairs));
    if (options.phi_target && !report.target_reached) {
        std::fprintf(stderr, "cpsj: recall %.4f below target %.4f after %zu repetitions\n",
                     report.repetitions.back().cum_recall.value_or(0.0), cfg.phi, report.repetitions_used);
        return kExitRecallNotReached;
    }
    return kExitOk;
}

int cmd_rsjoin(const CliConfig& cfg) {
    const Dataset r = load(cfg.inputs.at(0), cfg.tokenize);
    const Dataset s = load(cfg.inputs.at(1), cfg.tokenize);
    const RsJoinOutcome out = rs_join(r, s, cfg.algorithm_config());
    std::string text;
    for (const CrossPair& p : out.pairs) {
        text += std::to_string(r.source_line(p.r)) + ' ' + std::to_string(s.source_line(p.s)) + '\n';
    }
    emit(cfg.output, text);
    std::fprintf(stderr, "pairs=%zu pre_candidates=%llu candidates=%llu\n", out.pairs.size(),
                 static_cast<unsigned long long>(out.metrics.pre_candidates),
                 static_cast<unsigned long long>(out.metrics.candidates));
    return kExitOk;
}

struct GenerateOptions {
    std::string kind = "planted";
    std::size_t n = 0;
};

int cmd_generate(const CliConfig& cfg, const GenerateOptions& gen) {
    SyntheticSpec spec;
    if (gen.kind == "planted") {
        spec = planted_workload(cfg.lambda, cfg.seed);
    } else if (gen.kind == "zipf") {
        spec = zipf_workload(cfg.lambda, cfg.seed);
    } else if (gen.kind == "uniform") {
        spec = planted_workload(cfg.lambda, cfg.seed);
        spec.planted_pairs = 0;
    } else {
        throw std::invalid_argument("--kind must be planted, zipf or uniform");
    }
    if (gen.n) {
        spec.records = gen.n;
        spec.planted_pairs = std::min(spec.planted_pairs, gen.n / 2);
    }
    std::ostringstream text;
    write_dataset(text, generate_planted(spec));
    emit(cfg.output, text.str());
    return kExitOk;
}

int cmd_sweep(const CliConfig& base, const std::vector<double>& lambdas, const std::vector<std::string>& algorithms) {
    const Dataset ds = load(base.inputs.at(0), base.tokenize);
    std::string out = "algorithm,lambda,repetitions_used,recall,target_reached,pre_candidates,candidates,results,seconds\n";
    for (double lambda : lambdas) {
        const GroundTruth truth = make_ground_truth(ds, lambda);
        for (const std::string& alg : algorithms) {
            CliConfig cfg = base;
            cfg.lambda = lambda;
            cfg.algorithm = alg;
            cfg.validate();
            const AlgorithmConfig acfg = cfg.algorithm_config();
            const JoinSession session(ds, acfg);
            RunOptions options;
            options.seed = cfg.seed;
            options.threads = cfg.threads;
            options.max_reps = is_exact(acfg.algorithm) ? 1 : cfg.max_reps;
            options.phi_target = cfg.phi;
            const RunResult result = run_repetitions(
                alg, session.params_json(), [&](std::uint64_t seed) { return session.run(seed); }, &truth, options);
            std::uint64_t pre = 0, cand = 0;
            for (const auto& row : result.report.repetitions) {
                pre += row.metrics.pre_candidates;
                cand += row.metrics.candidates;
            }
            char line[256];
            std::snprintf(line, sizeof line, "%s,%.17g,%zu,%.17g,%d,%llu,%llu,%zu,%.17g\n", alg.c_str(), lambda,
                          result.report.repetitions_used, result.report.repetitions.back().cum_recall.value_or(1.0),
                          result.report.target_reached ? 1 : 0, static_cast<unsigned long long>(pre),
                          static_cast<unsigned long long>(cand), result.pairs.size(), result.report.total_wall_time);
            out += line;
        }
    }
    emit(base.output, out);
    return kExitOk;
}

void add_join_options(CLI::App& cmd, CliConfig& cfg) {
    cmd.add_option("--lambda", cfg.lambda, "similarity threshold in (0,1)")->capture_default_str();
    cmd.add_option("--alg", cfg.algorithm, "cpsjoin | minhash | allpairs | naive")->capture_default_str();
    cmd.add_option("--t", cfg.t, "embedding size")->capture_default_str();
    cmd.add_option("--ell", cfg.ell, "sketch length in 64-bit words")->capture_default_str();
    cmd.add_option("--delta", cfg.delta, "sketch filter false-negative bound")->capture_default_str();
    cmd.add_option("--epsilon", cfg.epsilon, "brute-force removal slack")->capture_default_str();
    cmd.add_option("--limit", cfg.limit, "brute-force node size")->capture_default_str();
    cmd.add_option("--k", cfg.k, "minhash concatenation length (0 = tune)")->capture_default_str();
    cmd.add_option("--L", cfg.L, "minhash bucketing passes per repetition (0 = derive from --phi)");
    cmd.add_flag("--fixed-L", cfg.fixed_L, "minhash: one run with L derived from --phi instead of repeating");
    cmd.add_flag("--no-sketch-filter", cfg.no_sketch_filter, "disable the 1-bit sketch filter");
    cmd.add_flag("--reference-mode", cfg.reference_mode, "cpsjoin: exact count map and hashed splitting");
    cmd.add_flag("--tokenize", cfg.tokenize, "map arbitrary string tokens to ids");
    cmd.add_option("--seed", cfg.seed, "master seed (default $CPSJ_SEED or 1)");
    cmd.add_option("--threads", cfg.threads, "concurrent repetitions")->capture_default_str();
    cmd.add_option("-o,--output", cfg.output, "output file (default stdout)");
}

}  // namespace

int main(int argc, char** argv) {
    CliConfig cfg;
    GenerateOptions gen;
    std::vector<double> sweep_lambdas{0.5, 0.6, 0.7, 0.8, 0.9};
    std::vector<std::string> sweep_algs{"cpsjoin", "minhash", "allpairs"};

    CLI::App app{"cpsj: set similarity joins"};
    app.require_subcommand(1);

    auto* stats = app.add_subcommand("stats", "dataset summary");
    stats->add_option("input", cfg.inputs, "dataset file")->required()->expected(1);
    stats->add_flag("--tokenize", cfg.tokenize, "map arbitrary string tokens to ids");

    auto* gt = app.add_subcommand("groundtruth", "exact join result for recall measurement");
    gt->add_option("input", cfg.inputs, "dataset file")->required()->expected(1);
    gt->add_option("--lambda", cfg.lambda, "similarity threshold")->required();
    gt->add_option("-o,--output", cfg.output, "ground-truth file")->required();
    gt->add_flag("--tokenize", cfg.tokenize, "map arbitrary string tokens to ids");

    auto* join = app.add_subcommand("join", "self-join with a recall-driven repetition loop");
    join->add_option("input", cfg.inputs, "dataset file")->required()->expected(1);
    add_join_options(*join, cfg);
    auto* phi_opt = join->add_option("--phi", cfg.phi, "target recall")->capture_default_str();
    join->add_option("--max-reps", cfg.max_reps, "repetition cap")->capture_default_str();
    join->add_option("--truth", cfg.truth, "ground-truth file from `cpsj groundtruth`");
    join->add_option("--format", cfg.format, "csv | json")->capture_default_str();
    join->add_option("--pairs-out", cfg.pairs_out, "write result pairs as input line numbers");

    auto* rs = app.add_subcommand("rsjoin", "join R against S; prints `r_line s_line` pairs");
    rs->add_option("inputs", cfg.inputs, "R and S files")->required()->expected(2);
    add_join_options(*rs, cfg);

    auto* generate = app.add_subcommand("generate", "write a synthetic dataset");
    generate->add_option("--kind", gen.kind, "planted | zipf | uniform")->capture_default_str();
    generate->add_option("--n", gen.n, "record count (default per kind)");
    generate->add_option("--lambda", cfg.lambda, "lower end of the planted similarity band")->capture_default_str();
    generate->add_option("--seed", cfg.seed, "generator seed");
    generate->add_option("-o,--output", cfg.output, "output file (default stdout)");

    auto* sweep = app.add_subcommand("sweep", "recall-driven runs over a grid of thresholds and algorithms (CSV)");
    sweep->add_option("input", cfg.inputs, "dataset file")->required()->expected(1);
    add_join_options(*sweep, cfg);
    sweep->add_option("--lambdas", sweep_lambdas, "thresholds")->delimiter(',');
    sweep->add_option("--algs", sweep_algs, "algorithms")->delimiter(',');
    sweep->add_option("--phi", cfg.phi, "target recall")->capture_default_str();
    sweep->add_option("--max-reps", cfg.max_reps, "repetition cap")->capture_default_str();

    auto* config = app.add_subcommand("config", "print the effective default configuration as JSON");

    try {
        cfg.seed = default_seed();
        app.parse(argc, argv);
        cfg.phi_given = phi_opt->count() > 0;
        cfg.validate();
        if (*stats) return cmd_stats(cfg);
        if (*gt) return cmd_groundtruth(cfg);
        if (*join) return cmd_join(cfg);
        if (*rs) return cmd_rsjoin(cfg);
        if (*generate) return cmd_generate(cfg, gen);
        if (*sweep) return cmd_sweep(cfg, sweep_lambdas, sweep_algs);
        if (*config) {
            std::cout << cfg.to_json().dump(2) << '\n';
            return kExitOk;
        }
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    } catch (const FileParseError& e) {
        std::fprintf(stderr, "cpsj: parse error: %s\n", e.what());
        return kExitParse;
    } catch (const GroundTruthError& e) {
        std::fprintf(stderr, "cpsj: %s\n", e.what());
        return kExitTruthMismatch;
    } catch (const IoError& e) {
        std::fprintf(stderr, "cpsj: %s\n", e.what());
        return kExitIo;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "cpsj: %s\n", e.what());
        return kExitUsage;
    }
    return kExitUsage;
}
