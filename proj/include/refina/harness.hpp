#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <sys/resource.h>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "refina/alignment.hpp"
#include "refina/error.hpp"
#include "refina/graph.hpp"
#include "refina/init.hpp"
#include "refina/metrics.hpp"
#include "refina/parallel.hpp"
#include "refina/refine.hpp"
#include "refina/rng.hpp"

namespace refina {

// Peak resident set size of this process, preferring getrusage and
// falling back to /proc/self/status. Returns 0 when unavailable.
inline std::size_t peak_rss_bytes() {
    struct rusage usage{};
    if (getrusage(RUSAGE_SELF, &usage) == 0 && usage.ru_maxrss > 0)
        return static_cast<std::size_t>(usage.ru_maxrss) * 1024;
    std::ifstream in("/proc/self/status");
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("VmHWM:", 0) == 0 || line.rfind("VmRSS:", 0) == 0) {
            std::istringstream ss(line.substr(6));
            std::size_t kb = 0;
            ss >> kb;
            return kb * 1024;
        }
    }
    return 0;
}

namespace detail {

inline void write_file_atomic(const std::string& path, const std::string& contents) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot open file for writing: " + tmp);
        out << contents;
    }
    std::filesystem::rename(tmp, path);
}

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string format_short(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

// Sample standard deviation (n - 1); zero for a single observation.
inline MeanStd mean_std(const std::vector<double>& xs) {
    MeanStd out;
    if (xs.empty()) return out;
    for (double x : xs) out.mean += x;
    out.mean /= static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - out.mean) * (x - out.mean);
        out.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return out;
}

} // namespace detail

struct GraphSource {
    std::string file;          // used when not generating
    bool generate = false;
    NodeId gen_n = 0;
    double gen_avg_degree = 0.0;
    std::uint64_t gen_seed = 0;

    Graph load() const {
        if (generate) return random_graph(gen_n, gen_avg_degree, gen_seed);
        if (file.empty()) throw ParameterError("no graph source configured");
        return load_edge_list(file);
    }
};

// One point of the refinement sweep.
struct RefineVariant {
    RefineMode mode = RefineMode::Dense;
    Normalization normalization = Normalization::SinglePass;
    std::optional<double> epsilon; // nullopt = auto
    int alpha = 10;
    int iterations = 100;

    std::string label() const {
        std::string s = mode == RefineMode::Dense ? "dense" : "sparse";
        s += normalization == Normalization::SinglePass ? "_single" : "_sinkhorn";
        s += "_eps";
        s += epsilon ? detail::format_short(*epsilon) : std::string("auto");
        s += "_a" + std::to_string(alpha);
        s += "_K" + std::to_string(iterations);
        return s;
    }

    RefineConfig to_config(int trace_every, double early_stop_fraction) const {
        RefineConfig cfg;
        cfg.mode = mode;
        cfg.normalization = normalization;
        cfg.epsilon = epsilon;
        cfg.alpha = alpha;
        cfg.iterations = iterations;
        cfg.trace_every = trace_every;
        cfg.early_stop_fraction = early_stop_fraction;
        return cfg;
    }
};

struct ExperimentConfig {
    GraphSource graph;
    std::vector<double> noise_levels;
    NoiseKind noise_kind = NoiseKind::RemoveEdges;
    InitSpec init{InitKind::CorruptedTruth, 0.3, 0, ""};
    std::vector<std::uint64_t> seeds;
    // Sweep axes; the cross product of these defines the variants.
    std::vector<int> iterations{100};
    std::vector<std::optional<double>> epsilons{std::nullopt};
    std::vector<int> alphas{10};
    std::vector<RefineMode> modes{RefineMode::Dense};
    std::vector<Normalization> normalizations{Normalization::SinglePass};
    int trace_every = 1;
    double early_stop_fraction = 0.0;
    std::vector<int> topk_values{1, 5, 10};
    std::string out_dir;

    void validate() const {
        if (noise_levels.empty()) throw ParameterError("noise level list must be non-empty");
        for (double p : noise_levels)
            if (p < 0.0 || p > 1.0) throw ParameterError("noise level must be in [0, 1]");
        if (seeds.empty()) throw ParameterError("seed list must be non-empty");
        if (iterations.empty() || epsilons.empty() || alphas.empty() || modes.empty() ||
            normalizations.empty())
            throw ParameterError("every sweep axis needs at least one value");
        if (out_dir.empty()) throw ParameterError("output directory is required");
        init.validate();
    }

    std::vector<RefineVariant> variants() const {
        std::vector<RefineVariant> out;
        for (RefineMode mode : modes)
            for (Normalization norm : normalizations)
                for (const auto& eps : epsilons)
                    for (int a : alphas)
                        for (int k : iterations)
                            out.push_back({mode, norm, eps, a, k});
        return out;
    }

    static ExperimentConfig from_json(const nlohmann::json& j);
    nlohmann::ordered_json to_json() const;
};

// The benchmark protocol: align a graph against its noisy permuted copy.
// Per seed, the permutation and the noise mask are both freshly drawn.
struct BenchInstance {
    Graph g2;
    Permutation truth;
    AlignmentMatrix m0;
};

inline BenchInstance make_bench_instance(const Graph& g1, double p, NoiseKind kind,
                                         const InitSpec& init, std::uint64_t seed) {
    BenchInstance inst;
    inst.truth = Permutation::random(g1.num_nodes(), rng::mix(seed, 1));
    NoiseSpec noise{kind, p, rng::mix(seed, 2)};
    inst.g2 = apply_noise(permute(g1, inst.truth), noise);
    InitSpec cell_init = init;
    cell_init.seed = rng::mix(seed, 3);
    inst.m0 = make_initial_alignment(cell_init, g1, inst.g2, &inst.truth);
    return inst;
}

struct BenchCell {
    double p = 0.0;
    std::uint64_t seed = 0;
    RefineVariant variant;
    MetricsReport initial;
    MetricsReport final_;
    IterationTrace trace;
    std::string stem; // output file stem, relative to out_dir
};

// Runs the full sweep and writes, per cell, "<stem>.trace.csv",
// "<stem>.metrics.json" (final), "<stem>.initial.json", plus one
// "summary.csv" with per-(noise, variant) means and sample standard
// deviations across seeds. Cells run on REFINA_WORKERS worker threads;
// all outputs are deterministic functions of (config, seeds) apart from
// the wall_ms trace column.
inline std::vector<BenchCell> run_benchmark(const ExperimentConfig& cfg) {
    cfg.validate();
    const Graph g1 = cfg.graph.load();
    std::filesystem::create_directories(cfg.out_dir);
    const auto variants = cfg.variants();

    std::vector<BenchCell> cells;
    for (double p : cfg.noise_levels)
        for (std::uint64_t seed : cfg.seeds)
            for (const auto& variant : variants) {
                BenchCell cell;
                cell.p = p;
                cell.seed = seed;
                cell.variant = variant;
                cell.stem = "p" + detail::format_short(p) + "_s" + std::to_string(seed) + "_" +
                            variant.label();
                cells.push_back(std::move(cell));
            }

    const int workers = par::env_workers();
    std::atomic<std::size_t> next{0};
    auto run_cell = [&](BenchCell& cell) {
        BenchInstance inst = make_bench_instance(g1, cell.p, cfg.noise_kind, cfg.init, cell.seed);
        RefineConfig rc = cell.variant.to_config(cfg.trace_every, cfg.early_stop_fraction);
        RefineResult result = refine(g1, inst.g2, inst.m0, rc, &inst.truth);
        cell.initial = compute_metrics(g1, inst.g2, inst.m0, &inst.truth, cfg.topk_values);
        cell.final_ = compute_metrics(g1, inst.g2, result.matrix, &inst.truth, cfg.topk_values);
        cell.trace = std::move(result.trace);

        const std::string base = (std::filesystem::path(cfg.out_dir) / cell.stem).string();
        std::ostringstream trace_csv;
        cell.trace.write_csv(trace_csv);
        detail::write_file_atomic(base + ".trace.csv", trace_csv.str());
        detail::write_file_atomic(base + ".metrics.json", cell.final_.to_json().dump(2) + "\n");
        detail::write_file_atomic(base + ".initial.json", cell.initial.to_json().dump(2) + "\n");
    };
    if (workers <= 1) {
        for (auto& cell : cells) run_cell(cell);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= cells.size()) return;
                    run_cell(cells[i]);
                }
            });
        for (auto& th : pool) th.join();
    }

    // Summary: group by (noise level, variant) in declaration order.
    std::ostringstream summary;
    summary << "p,mode,normalization,epsilon,alpha,iters,seeds,"
            << "init_acc_mean,init_acc_std,final_acc_mean,final_acc_std,"
            << "final_mnc_mean,final_mnc_std\n";
    for (double p : cfg.noise_levels)
        for (const auto& variant : variants) {
            std::vector<double> init_acc, final_acc, final_mnc;
            for (const auto& cell : cells) {
                if (cell.p != p || cell.variant.label() != variant.label()) continue;
                init_acc.push_back(cell.initial.accuracy.value_or(0.0));
                final_acc.push_back(cell.final_.accuracy.value_or(0.0));
                final_mnc.push_back(cell.final_.avg_mnc);
            }
            const auto ia = detail::mean_std(init_acc);
            const auto fa = detail::mean_std(final_acc);
            const auto fm = detail::mean_std(final_mnc);
            summary << detail::format_short(p) << ','
                    << (variant.mode == RefineMode::Dense ? "dense" : "sparse") << ','
                    << (variant.normalization == Normalization::SinglePass ? "single"
                                                                           : "sinkhorn")
                    << ','
                    << (variant.epsilon ? detail::format_short(*variant.epsilon)
                                        : std::string("auto"))
                    << ',' << variant.alpha << ',' << variant.iterations << ','
                    << init_acc.size() << ',' << detail::format_double(ia.mean) << ','
                    << detail::format_double(ia.std) << ',' << detail::format_double(fa.mean)
                    << ',' << detail::format_double(fa.std) << ','
                    << detail::format_double(fm.mean) << ',' << detail::format_double(fm.std)
                    << '\n';
        }
    detail::write_file_atomic((std::filesystem::path(cfg.out_dir) / "summary.csv").string(),
                              summary.str());
    return cells;
}

// Refine an externally produced alignment between two graph files. Writes
// "refined.aln" (alignment format), "metrics.json", and "trace.csv" into
// out_dir. Accuracy fields appear only when a truth file is supplied.
struct ExternalRunResult {
    AlignmentMatrix refined;
    MetricsReport metrics;
    IterationTrace trace;
};

inline ExternalRunResult run_external(const std::string& g1_path, const std::string& g2_path,
                                      const std::string& m0_path, const RefineConfig& cfg,
                                      const std::string& truth_path, const std::string& out_dir,
                                      const std::vector<int>& topk_values = {1, 5, 10}) {
    const Graph g1 = load_edge_list(g1_path);
    const Graph g2 = load_edge_list(g2_path);

    // Report ill-fitting alignment files as a dimension problem rather
    // than a parse problem: scan index ranges first.
    {
        std::ifstream in(m0_path);
        if (!in) throw IoError("cannot open alignment file: " + m0_path);
        std::string line;
        while (std::getline(in, line)) {
            std::size_t start = line.find_first_not_of(" \t\r");
            if (start == std::string::npos || line[start] == '#') continue;
            std::istringstream ss(line);
            long long i = -1, j = -1;
            if (ss >> i >> j) {
                if (i >= g1.num_nodes() || j >= g2.num_nodes())
                    throw DimensionError("alignment file indices exceed graph sizes");
            }
        }
    }
    const AlignmentMatrix m0 = load_alignment(m0_path, g1.num_nodes(), g2.num_nodes());

    std::optional<Permutation> truth;
    if (!truth_path.empty()) {
        truth = load_permutation(truth_path);
        if (truth->size() != g1.num_nodes())
            throw DimensionError("truth permutation length does not match g1");
    }

    ExternalRunResult out;
    RefineResult result = refine(g1, g2, m0, cfg, truth ? &*truth : nullptr);
    out.refined = std::move(result.matrix);
    out.trace = std::move(result.trace);
    out.metrics = compute_metrics(g1, g2, out.refined, truth ? &*truth : nullptr, topk_values);

    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::ostringstream aln;
        save_alignment(out.refined, aln);
        detail::write_file_atomic((std::filesystem::path(out_dir) / "refined.aln").string(),
                                  aln.str());
        detail::write_file_atomic((std::filesystem::path(out_dir) / "metrics.json").string(),
                                  out.metrics.to_json().dump(2) + "\n");
        std::ostringstream trace_csv;
        out.trace.write_csv(trace_csv);
        detail::write_file_atomic((std::filesystem::path(out_dir) / "trace.csv").string(),
                                  trace_csv.str());
    }
    return out;
}

// Per-iteration wall time of both refinement modes across problem sizes.
struct ScalePoint {
    NodeId n = 0;
    RefineMode mode = RefineMode::Dense;
    double ms_per_iter = 0.0;
};

struct ScaleOptions {
    double avg_degree = 10.0;
    double noise_p = 0.05;
    double corruption = 0.3;
    int probe_iterations = 8;
    int repeats = 4; // timing runs per (size, mode); the fastest wins
    int alpha = 10;
    std::vector<RefineMode> modes{RefineMode::Dense, RefineMode::Sparse};
    std::uint64_t seed = 1;
};

inline std::vector<ScalePoint> scaling_probe(const std::vector<NodeId>& sizes,
                                             const ScaleOptions& opts = {}) {
    if (sizes.size() < 3) throw ParameterError("scaling probe needs at least 3 sizes");
    for (std::size_t i = 1; i < sizes.size(); ++i)
        if (sizes[i] <= sizes[i - 1]) throw ParameterError("scaling probe sizes must ascend");
    if (opts.probe_iterations < 1) throw ParameterError("probe iterations must be positive");

    struct Probe {
        Graph g1, g2;
        AlignmentMatrix m0;
    };
    std::vector<Probe> instances;
    for (NodeId n : sizes) {
        Probe p;
        p.g1 = random_graph(n, opts.avg_degree, rng::mix(opts.seed, n));
        const Permutation truth = Permutation::random(n, rng::mix(opts.seed, n + 1));
        p.g2 = apply_noise(permute(p.g1, truth),
                           {NoiseKind::RemoveEdges, opts.noise_p, rng::mix(opts.seed, n + 2)});
        p.m0 = corrupted_truth(truth, opts.corruption, n, rng::mix(opts.seed, n + 3));
        instances.push_back(std::move(p));
    }

    // Round 0 is an untimed warmup that settles CPU clocks and faults in
    // the instances. The timed rounds interleave across sizes, and the
    // minimum over rounds and post-warmup iterations wins: machine noise
    // only ever inflates a sample, and a sustained load spike cannot
    // poison every round of one size while sparing its neighbors.
    std::vector<double> best(sizes.size() * opts.modes.size(), 0.0);
    for (int rep = 0; rep <= std::max(1, opts.repeats); ++rep) {
        for (std::size_t si = 0; si < sizes.size(); ++si) {
            for (std::size_t mi = 0; mi < opts.modes.size(); ++mi) {
                RefineConfig rc;
                rc.mode = opts.modes[mi];
                rc.iterations = rep == 0 ? std::min(2, opts.probe_iterations)
                                         : opts.probe_iterations;
                rc.alpha = opts.alpha;
                RefineResult result = refine(instances[si].g1, instances[si].g2,
                                             instances[si].m0, rc);
                if (rep == 0) continue;
                double& slot = best[si * opts.modes.size() + mi];
                for (std::size_t r = 0; r < result.trace.records.size(); ++r) {
                    const double t = result.trace.records[r].wall_ms;
                    if (r == 0 && result.trace.records.size() > 1) continue;
                    if (slot == 0.0 || t < slot) slot = t;
                }
            }
        }
    }
    std::vector<ScalePoint> points;
    for (std::size_t si = 0; si < sizes.size(); ++si)
        for (std::size_t mi = 0; mi < opts.modes.size(); ++mi)
            points.push_back({sizes[si], opts.modes[mi], best[si * opts.modes.size() + mi]});
    return points;
}

inline std::string scale_csv(const std::vector<ScalePoint>& points) {
    std::ostringstream out;
    out << "n,mode,ms_per_iter\n";
    for (const auto& pt : points)
        out << pt.n << ',' << (pt.mode == RefineMode::Dense ? "dense" : "sparse") << ','
            << detail::format_double(pt.ms_per_iter) << '\n';
    return out.str();
}

// --- config (de)serialization ----------------------------------------------

inline ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    if (j.contains("graph")) {
        const auto& g = j.at("graph");
        if (g.contains("file")) {
            cfg.graph.file = g.at("file").get<std::string>();
        } else if (g.contains("generate")) {
            const auto& gen = g.at("generate");
            cfg.graph.generate = true;
            cfg.graph.gen_n = gen.at("n").get<NodeId>();
            cfg.graph.gen_avg_degree = gen.at("avg_degree").get<double>();
            cfg.graph.gen_seed = gen.value("seed", 0ULL);
        } else {
            throw ParameterError("graph must give either 'file' or 'generate'");
        }
    }
    if (j.contains("noise")) cfg.noise_levels = j.at("noise").get<std::vector<double>>();
    if (j.contains("noise_kind")) {
        const std::string k = j.at("noise_kind").get<std::string>();
        if (k == "remove_edges")
            cfg.noise_kind = NoiseKind::RemoveEdges;
        else if (k == "add_edges")
            cfg.noise_kind = NoiseKind::AddEdges;
        else
            throw ParameterError("noise_kind must be remove_edges or add_edges");
    }
    if (j.contains("init")) {
        const auto& init = j.at("init");
        const std::string kind = init.value("kind", "corrupted_truth");
        if (kind == "degree_prior")
            cfg.init.kind = InitKind::DegreePrior;
        else if (kind == "corrupted_truth")
            cfg.init.kind = InitKind::CorruptedTruth;
        else if (kind == "random_map")
            cfg.init.kind = InitKind::RandomMap;
        else if (kind == "external_file")
            cfg.init.kind = InitKind::ExternalFile;
        else
            throw ParameterError("unknown init kind: " + kind);
        cfg.init.corruption_fraction = init.value("fraction", 0.3);
        cfg.init.path = init.value("path", "");
    }
    if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("refine")) {
        const auto& r = j.at("refine");
        if (r.contains("iters")) cfg.iterations = r.at("iters").get<std::vector<int>>();
        if (r.contains("alpha")) cfg.alphas = r.at("alpha").get<std::vector<int>>();
        if (r.contains("epsilon")) {
            cfg.epsilons.clear();
            for (const auto& e : r.at("epsilon")) {
                if (e.is_string()) {
                    if (e.get<std::string>() != "auto")
                        throw ParameterError("epsilon must be a number or 'auto'");
                    cfg.epsilons.push_back(std::nullopt);
                } else {
                    cfg.epsilons.push_back(e.get<double>());
                }
            }
        }
        if (r.contains("mode")) {
            cfg.modes.clear();
            for (const auto& m : r.at("mode")) {
                const std::string s = m.get<std::string>();
                if (s == "dense")
                    cfg.modes.push_back(RefineMode::Dense);
                else if (s == "sparse")
                    cfg.modes.push_back(RefineMode::Sparse);
                else
                    throw ParameterError("mode must be dense or sparse");
            }
        }
        if (r.contains("normalization")) {
            cfg.normalizations.clear();
            for (const auto& m : r.at("normalization")) {
                const std::string s = m.get<std::string>();
                if (s == "single")
                    cfg.normalizations.push_back(Normalization::SinglePass);
                else if (s == "sinkhorn")
                    cfg.normalizations.push_back(Normalization::Sinkhorn);
                else
                    throw ParameterError("normalization must be single or sinkhorn");
            }
        }
    }
    cfg.trace_every = j.value("trace_every", 1);
    cfg.early_stop_fraction = j.value("early_stop_fraction", 0.0);
    if (j.contains("topk")) cfg.topk_values = j.at("topk").get<std::vector<int>>();
    cfg.out_dir = j.value("out", "");
    return cfg;
}

inline nlohmann::ordered_json ExperimentConfig::to_json() const {
    nlohmann::ordered_json j;
    if (graph.generate) {
        j["graph"]["generate"] = {{"n", graph.gen_n},
                                  {"avg_degree", graph.gen_avg_degree},
                                  {"seed", graph.gen_seed}};
    } else if (!graph.file.empty()) {
        j["graph"]["file"] = graph.file;
    }
    j["noise"] = noise_levels;
    j["noise_kind"] = noise_kind == NoiseKind::RemoveEdges ? "remove_edges" : "add_edges";
    switch (init.kind) {
        case InitKind::DegreePrior: j["init"]["kind"] = "degree_prior"; break;
        case InitKind::CorruptedTruth: j["init"]["kind"] = "corrupted_truth"; break;
        case InitKind::RandomMap: j["init"]["kind"] = "random_map"; break;
        case InitKind::ExternalFile: j["init"]["kind"] = "external_file"; break;
    }
    if (init.kind == InitKind::CorruptedTruth) j["init"]["fraction"] = init.corruption_fraction;
    if (init.kind == InitKind::ExternalFile) j["init"]["path"] = init.path;
    j["seeds"] = seeds;
    j["refine"]["iters"] = iterations;
    {
        nlohmann::ordered_json eps = nlohmann::ordered_json::array();
        for (const auto& e : epsilons) {
            if (e)
                eps.push_back(*e);
            else
                eps.push_back("auto");
        }
        j["refine"]["epsilon"] = std::move(eps);
    }
    j["refine"]["alpha"] = alphas;
    {
        nlohmann::ordered_json modes_json = nlohmann::ordered_json::array();
        for (RefineMode m : modes) modes_json.push_back(m == RefineMode::Dense ? "dense" : "sparse");
        j["refine"]["mode"] = std::move(modes_json);
        nlohmann::ordered_json norms = nlohmann::ordered_json::array();
        for (Normalization n : normalizations)
            norms.push_back(n == Normalization::SinglePass ? "single" : "sinkhorn");
        j["refine"]["normalization"] = std::move(norms);
    }
    j["trace_every"] = trace_every;
    j["early_stop_fraction"] = early_stop_fraction;
    j["topk"] = topk_values;
    j["out"] = out_dir;
    return j;
}

} // namespace refina
