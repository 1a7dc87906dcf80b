// Command-line front end: benchmark sweeps, refinement of external
// alignments, scaling probes, and metric evaluation.
//
// Exit codes: 0 success, 1 invalid configuration/usage, 2 unreadable or
// malformed input, 3 dimension inconsistency between inputs.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "refina/refina.hpp"

namespace {

using namespace refina;

std::optional<double> parse_epsilon(const std::string& text) {
    if (text == "auto") return std::nullopt;
    try {
        std::size_t used = 0;
        double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw ParameterError("--epsilon must be a number or 'auto'");
    }
}

RefineMode parse_mode(const std::string& s) {
    if (s == "dense") return RefineMode::Dense;
    if (s == "sparse") return RefineMode::Sparse;
    throw ParameterError("--mode must be dense or sparse");
}

Normalization parse_normalization(const std::string& s) {
    if (s == "single") return Normalization::SinglePass;
    if (s == "sinkhorn") return Normalization::Sinkhorn;
    throw ParameterError("--normalization must be single or sinkhorn");
}

struct BenchArgs {
    std::string config_path;
    std::string graph_file;
    std::vector<double> noise;
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> modes;
    std::vector<int> alphas;
    std::vector<std::string> epsilons;
    std::vector<int> iters;
    std::vector<std::string> normalizations;
    std::string init_kind;
    double init_fraction = -1.0;
    std::string out;
    int gen_n = 0;
    double gen_avg_degree = 10.0;
    std::uint64_t gen_seed = 0;
    int trace_every = 0;
};

int cmd_bench(const BenchArgs& args) {
    ExperimentConfig cfg;
    if (!args.config_path.empty()) {
        std::ifstream in(args.config_path);
        if (!in) throw IoError("cannot open config file: " + args.config_path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ParameterError(std::string("config is not valid JSON: ") + e.what());
        }
        cfg = ExperimentConfig::from_json(j);
    }
    // Flags override the config file.
    if (!args.graph_file.empty()) {
        cfg.graph = GraphSource{};
        cfg.graph.file = args.graph_file;
    }
    if (args.gen_n > 0) {
        cfg.graph = GraphSource{};
        cfg.graph.generate = true;
        cfg.graph.gen_n = args.gen_n;
        cfg.graph.gen_avg_degree = args.gen_avg_degree;
        cfg.graph.gen_seed = args.gen_seed;
    }
    if (!args.noise.empty()) cfg.noise_levels = args.noise;
    if (!args.seeds.empty()) cfg.seeds = args.seeds;
    if (!args.modes.empty()) {
        cfg.modes.clear();
        for (const auto& m : args.modes) cfg.modes.push_back(parse_mode(m));
    }
    if (!args.alphas.empty()) cfg.alphas = args.alphas;
    if (!args.epsilons.empty()) {
        cfg.epsilons.clear();
        for (const auto& e : args.epsilons) cfg.epsilons.push_back(parse_epsilon(e));
    }
    if (!args.iters.empty()) cfg.iterations = args.iters;
    if (!args.normalizations.empty()) {
        cfg.normalizations.clear();
        for (const auto& n : args.normalizations)
            cfg.normalizations.push_back(parse_normalization(n));
    }
    if (!args.init_kind.empty()) {
        if (args.init_kind == "degree_prior")
            cfg.init.kind = InitKind::DegreePrior;
        else if (args.init_kind == "corrupted_truth")
            cfg.init.kind = InitKind::CorruptedTruth;
        else if (args.init_kind == "random_map")
            cfg.init.kind = InitKind::RandomMap;
        else
            throw ParameterError("--init must be degree_prior, corrupted_truth, or random_map");
    }
    if (args.init_fraction >= 0.0) cfg.init.corruption_fraction = args.init_fraction;
    if (!args.out.empty()) cfg.out_dir = args.out;
    if (args.trace_every > 0) cfg.trace_every = args.trace_every;

    auto cells = run_benchmark(cfg);
    std::cout << "wrote " << cells.size() << " cells to " << cfg.out_dir << "\n";
    return 0;
}

struct RefineArgs {
    std::string graph1, graph2, m0, truth, out;
    std::string mode = "dense";
    std::string normalization = "single";
    std::string epsilon = "auto";
    int alpha = 10;
    int iters = 100;
    int trace_every = 1;
    double early_stop = 0.0;
};

int cmd_refine(const RefineArgs& args) {
    RefineConfig cfg;
    cfg.mode = parse_mode(args.mode);
    cfg.normalization = parse_normalization(args.normalization);
    cfg.epsilon = parse_epsilon(args.epsilon);
    cfg.alpha = args.alpha;
    cfg.iterations = args.iters;
    cfg.trace_every = args.trace_every;
    cfg.early_stop_fraction = args.early_stop;
    ExternalRunResult result =
        run_external(args.graph1, args.graph2, args.m0, cfg, args.truth, args.out);
    std::cout << result.metrics.to_json().dump(2) << "\n";
    return 0;
}

struct ScaleArgs {
    std::vector<NodeId> sizes;
    double avg_degree = 10.0;
    int iters = 5;
    int alpha = 10;
    std::vector<std::string> modes{"dense", "sparse"};
    std::uint64_t seed = 1;
    std::string out;
};

int cmd_scale(const ScaleArgs& args) {
    ScaleOptions opts;
    opts.avg_degree = args.avg_degree;
    opts.probe_iterations = args.iters;
    opts.alpha = args.alpha;
    opts.seed = args.seed;
    opts.modes.clear();
    for (const auto& m : args.modes) opts.modes.push_back(parse_mode(m));
    auto points = scaling_probe(args.sizes, opts);
    const std::string csv = scale_csv(points);
    if (args.out.empty()) {
        std::cout << csv;
    } else {
        detail::write_file_atomic(args.out, csv);
        std::cout << "wrote " << args.out << "\n";
    }
    return 0;
}

struct MetricsArgs {
    std::string graph1, graph2, m0, truth, out;
    std::vector<int> topk{1, 5, 10};
};

int cmd_metrics(const MetricsArgs& args) {
    const Graph g1 = load_edge_list(args.graph1);
    const Graph g2 = load_edge_list(args.graph2);
    const AlignmentMatrix m = load_alignment(args.m0, g1.num_nodes(), g2.num_nodes());
    std::optional<Permutation> truth;
    if (!args.truth.empty()) {
        truth = load_permutation(args.truth);
        if (truth->size() != g1.num_nodes())
            throw DimensionError("truth permutation length does not match g1");
    }
    MetricsReport report =
        compute_metrics(g1, g2, m, truth ? &*truth : nullptr, args.topk);
    const std::string text = report.to_json().dump(2) + "\n";
    if (args.out.empty()) {
        std::cout << text;
    } else {
        detail::write_file_atomic(args.out, text);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Network alignment refinement toolkit"};
    app.require_subcommand(1);

    BenchArgs bench;
    auto* bench_cmd = app.add_subcommand(
        "bench", "Run the noisy permuted-copy benchmark sweep");
    bench_cmd->add_option("--config", bench.config_path, "JSON experiment config");
    bench_cmd->add_option("--graph", bench.graph_file, "edge list file for G1");
    bench_cmd->add_option("--gen-n", bench.gen_n, "generate G1 with this many nodes");
    bench_cmd->add_option("--gen-avg-degree", bench.gen_avg_degree, "average degree for --gen-n");
    bench_cmd->add_option("--gen-seed", bench.gen_seed, "seed for --gen-n");
    bench_cmd->add_option("--noise", bench.noise, "noise levels p");
    bench_cmd->add_option("--seeds", bench.seeds, "trial seeds");
    bench_cmd->add_option("--mode", bench.modes, "dense and/or sparse");
    bench_cmd->add_option("--alpha", bench.alphas, "sparse updates per row");
    bench_cmd->add_option("--epsilon", bench.epsilons, "token match scores (number or 'auto')");
    bench_cmd->add_option("--iters", bench.iters, "refinement iteration counts");
    bench_cmd->add_option("--normalization", bench.normalizations, "single and/or sinkhorn");
    bench_cmd->add_option("--init", bench.init_kind,
                          "degree_prior | corrupted_truth | random_map");
    bench_cmd->add_option("--init-fraction", bench.init_fraction,
                          "corrupted_truth fraction");
    bench_cmd->add_option("--trace-every", bench.trace_every, "record every j-th iteration");
    bench_cmd->add_option("--out", bench.out, "output directory");

    RefineArgs ext;
    auto* refine_cmd = app.add_subcommand("refine", "Refine an external alignment");
    refine_cmd->add_option("--graph", ext.graph1, "edge list file for G1")->required();
    refine_cmd->add_option("--graph2", ext.graph2, "edge list file for G2")->required();
    refine_cmd->add_option("--m0", ext.m0, "initial alignment file")->required();
    refine_cmd->add_option("--truth", ext.truth, "ground truth permutation file");
    refine_cmd->add_option("--mode", ext.mode, "dense | sparse");
    refine_cmd->add_option("--normalization", ext.normalization, "single | sinkhorn");
    refine_cmd->add_option("--epsilon", ext.epsilon, "token match score (number or 'auto')");
    refine_cmd->add_option("--alpha", ext.alpha, "sparse updates per row");
    refine_cmd->add_option("--iters", ext.iters, "refinement iterations");
    refine_cmd->add_option("--trace-every", ext.trace_every, "record every j-th iteration");
    refine_cmd->add_option("--early-stop", ext.early_stop,
                           "stop when changed-argmax fraction <= this");
    refine_cmd->add_option("--out", ext.out, "output directory");

    ScaleArgs scale;
    auto* scale_cmd = app.add_subcommand("scale", "Per-iteration timing across sizes");
    scale_cmd->add_option("--sizes", scale.sizes, "ascending node counts (>= 3)")->required();
    scale_cmd->add_option("--avg-degree", scale.avg_degree, "average degree");
    scale_cmd->add_option("--iters", scale.iters, "probe iterations per size");
    scale_cmd->add_option("--alpha", scale.alpha, "sparse updates per row");
    scale_cmd->add_option("--mode", scale.modes, "modes to probe");
    scale_cmd->add_option("--seed", scale.seed, "generation seed");
    scale_cmd->add_option("--out", scale.out, "output CSV (stdout if omitted)");

    MetricsArgs metrics;
    auto* metrics_cmd = app.add_subcommand("metrics", "Evaluate an alignment file");
    metrics_cmd->add_option("--graph", metrics.graph1, "edge list file for G1")->required();
    metrics_cmd->add_option("--graph2", metrics.graph2, "edge list file for G2")->required();
    metrics_cmd->add_option("--m0", metrics.m0, "alignment file")->required();
    metrics_cmd->add_option("--truth", metrics.truth, "ground truth permutation file");
    metrics_cmd->add_option("--topk", metrics.topk, "top-k accuracy values");
    metrics_cmd->add_option("--out", metrics.out, "output JSON file (stdout if omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1; // normalize usage errors to exit code 1
    }

    try {
        if (bench_cmd->parsed()) return cmd_bench(bench);
        if (refine_cmd->parsed()) return cmd_refine(ext);
        if (scale_cmd->parsed()) return cmd_scale(scale);
        if (metrics_cmd->parsed()) return cmd_metrics(metrics);
    } catch (const DimensionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
