#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "refina/harness.hpp"
#include "test_support.hpp"

using namespace refina;
using testsupport::TempDir;
using testsupport::read_file;

namespace {

ExperimentConfig small_config(const std::string& out_dir) {
    ExperimentConfig cfg;
    cfg.graph.generate = true;
    cfg.graph.gen_n = 120;
    cfg.graph.gen_avg_degree = 8.0;
    cfg.graph.gen_seed = 5;
    cfg.noise_levels = {0.05};
    cfg.seeds = {1, 2, 3, 4};
    cfg.iterations = {30};
    cfg.init.kind = InitKind::CorruptedTruth;
    cfg.init.corruption_fraction = 0.3;
    cfg.out_dir = out_dir;
    return cfg;
}

// Trace CSV with the wall_ms column blanked, for determinism comparisons.
std::string strip_wall_column(const std::string& csv) {
    std::istringstream in(csv);
    std::ostringstream out;
    std::string line;
    while (std::getline(in, line)) {
        const std::size_t last_comma = line.rfind(',');
        out << line.substr(0, last_comma) << '\n';
    }
    return out.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(REFINA_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

} // namespace

TEST(Harness, PerfectInputIsFixedPoint) {
    TempDir tmp;
    ExperimentConfig cfg = small_config(tmp.path() + "/out");
    cfg.noise_levels = {0.0};
    cfg.init.corruption_fraction = 0.0;
    cfg.seeds = {1, 2};
    auto cells = run_benchmark(cfg);
    ASSERT_EQ(cells.size(), 2u);
    for (const auto& cell : cells) {
        EXPECT_DOUBLE_EQ(*cell.initial.accuracy, 1.0);
        EXPECT_DOUBLE_EQ(*cell.final_.accuracy, 1.0);
        for (const auto& rec : cell.trace.records) EXPECT_DOUBLE_EQ(*rec.accuracy, 1.0);
        const std::string base = tmp.path() + "/out/" + cell.stem;
        EXPECT_TRUE(std::filesystem::exists(base + ".trace.csv"));
        EXPECT_TRUE(std::filesystem::exists(base + ".metrics.json"));
        EXPECT_TRUE(std::filesystem::exists(base + ".initial.json"));
    }
    EXPECT_TRUE(std::filesystem::exists(tmp.path() + "/out/summary.csv"));
}

TEST(Harness, RefinementImprovesCorruptedTruth) {
    TempDir tmp;
    ExperimentConfig cfg = small_config(tmp.path() + "/out");
    auto cells = run_benchmark(cfg);
    int improved = 0;
    for (const auto& cell : cells)
        if (*cell.final_.accuracy > *cell.initial.accuracy) ++improved;
    EXPECT_GE(improved, static_cast<int>(cells.size()) - 1);
}

TEST(Harness, SummaryMatchesPerSeedFiles) {
    TempDir tmp;
    ExperimentConfig cfg = small_config(tmp.path() + "/out");
    auto cells = run_benchmark(cfg);

    // Recompute the final-accuracy mean/std from the per-seed JSON files.
    std::vector<double> final_acc;
    for (const auto& cell : cells) {
        auto j = nlohmann::json::parse(
            read_file(tmp.path() + "/out/" + cell.stem + ".metrics.json"));
        final_acc.push_back(j.at("accuracy").get<double>());
    }
    double mean = 0.0;
    for (double v : final_acc) mean += v / final_acc.size();
    double ss = 0.0;
    for (double v : final_acc) ss += (v - mean) * (v - mean);
    const double stddev = std::sqrt(ss / (final_acc.size() - 1));

    std::istringstream summary(read_file(tmp.path() + "/out/summary.csv"));
    std::string header, row;
    std::getline(summary, header);
    EXPECT_EQ(header,
              "p,mode,normalization,epsilon,alpha,iters,seeds,init_acc_mean,init_acc_std,"
              "final_acc_mean,final_acc_std,final_mnc_mean,final_mnc_std");
    ASSERT_TRUE(static_cast<bool>(std::getline(summary, row)));
    std::vector<std::string> fields;
    std::istringstream row_ss(row);
    std::string field;
    while (std::getline(row_ss, field, ',')) fields.push_back(field);
    ASSERT_EQ(fields.size(), 13u);
    EXPECT_EQ(fields[6], "4"); // seed count
    EXPECT_DOUBLE_EQ(std::stod(fields[9]), mean);
    EXPECT_DOUBLE_EQ(std::stod(fields[10]), stddev);
}

TEST(Harness, OutputsAreReproducible) {
    TempDir tmp;
    ExperimentConfig cfg_a = small_config(tmp.path() + "/a");
    cfg_a.seeds = {1, 2};
    ExperimentConfig cfg_b = small_config(tmp.path() + "/b");
    cfg_b.seeds = {1, 2};
    auto cells_a = run_benchmark(cfg_a);
    auto cells_b = run_benchmark(cfg_b);
    ASSERT_EQ(cells_a.size(), cells_b.size());
    for (std::size_t i = 0; i < cells_a.size(); ++i) {
        const std::string stem = cells_a[i].stem;
        EXPECT_EQ(read_file(tmp.path() + "/a/" + stem + ".metrics.json"),
                  read_file(tmp.path() + "/b/" + stem + ".metrics.json"));
        EXPECT_EQ(read_file(tmp.path() + "/a/" + stem + ".initial.json"),
                  read_file(tmp.path() + "/b/" + stem + ".initial.json"));
        EXPECT_EQ(strip_wall_column(read_file(tmp.path() + "/a/" + stem + ".trace.csv")),
                  strip_wall_column(read_file(tmp.path() + "/b/" + stem + ".trace.csv")));
    }
    EXPECT_EQ(read_file(tmp.path() + "/a/summary.csv"), read_file(tmp.path() + "/b/summary.csv"));
}

TEST(Harness, ParallelWorkersProduceIdenticalFiles) {
    TempDir tmp;
    ExperimentConfig cfg_serial = small_config(tmp.path() + "/serial");
    cfg_serial.seeds = {1, 2, 3};
    run_benchmark(cfg_serial);

    ::setenv("REFINA_WORKERS", "4", 1);
    ExperimentConfig cfg_par = small_config(tmp.path() + "/par");
    cfg_par.seeds = {1, 2, 3};
    auto cells = run_benchmark(cfg_par);
    ::unsetenv("REFINA_WORKERS");

    for (const auto& cell : cells) {
        EXPECT_EQ(read_file(tmp.path() + "/serial/" + cell.stem + ".metrics.json"),
                  read_file(tmp.path() + "/par/" + cell.stem + ".metrics.json"));
        EXPECT_EQ(
            strip_wall_column(read_file(tmp.path() + "/serial/" + cell.stem + ".trace.csv")),
            strip_wall_column(read_file(tmp.path() + "/par/" + cell.stem + ".trace.csv")));
    }
    EXPECT_EQ(read_file(tmp.path() + "/serial/summary.csv"),
              read_file(tmp.path() + "/par/summary.csv"));
}

TEST(Harness, EpsilonSweepProducesDistinctCells) {
    TempDir tmp;
    ExperimentConfig cfg = small_config(tmp.path() + "/out");
    cfg.seeds = {1};
    cfg.epsilons = {std::nullopt, 0.0, 1e-4};
    auto cells = run_benchmark(cfg);
    ASSERT_EQ(cells.size(), 3u);
    std::set<std::string> stems;
    for (const auto& cell : cells) stems.insert(cell.stem);
    EXPECT_EQ(stems.size(), 3u);
    // Epsilon = 0 cannot discover new alignments, so its cell stays at the
    // initial accuracy (up to single rows whose only entry died); positive
    // epsilon cells climb past it.
    double zero_final = -1.0, zero_init = -1.0, best_positive = -1.0;
    for (const auto& cell : cells) {
        if (cell.variant.epsilon && *cell.variant.epsilon == 0.0) {
            zero_final = *cell.final_.accuracy;
            zero_init = *cell.initial.accuracy;
        } else {
            best_positive = std::max(best_positive, *cell.final_.accuracy);
        }
    }
    EXPECT_NEAR(zero_final, zero_init, 0.02);
    EXPECT_GT(best_positive, zero_final);
}

TEST(Harness, ConfigJsonRoundTrip) {
    ExperimentConfig cfg = small_config("/tmp/x");
    cfg.epsilons = {std::nullopt, 1e-4};
    cfg.modes = {RefineMode::Dense, RefineMode::Sparse};
    cfg.normalizations = {Normalization::SinglePass, Normalization::Sinkhorn};
    cfg.noise_kind = NoiseKind::AddEdges;
    ExperimentConfig back =
        ExperimentConfig::from_json(nlohmann::json::parse(cfg.to_json().dump()));
    EXPECT_EQ(back.graph.gen_n, cfg.graph.gen_n);
    EXPECT_EQ(back.noise_levels, cfg.noise_levels);
    EXPECT_EQ(back.seeds, cfg.seeds);
    EXPECT_EQ(back.epsilons, cfg.epsilons);
    EXPECT_EQ(back.modes, cfg.modes);
    EXPECT_EQ(back.normalizations, cfg.normalizations);
    EXPECT_EQ(back.noise_kind, cfg.noise_kind);
    EXPECT_EQ(back.out_dir, cfg.out_dir);

    EXPECT_THROW(ExperimentConfig::from_json(nlohmann::json::parse(
                     R"({"refine": {"mode": ["bogus"]}})")),
                 ParameterError);
    ExperimentConfig invalid = small_config("");
    EXPECT_THROW(invalid.validate(), ParameterError);
    ExperimentConfig no_noise = small_config("/tmp/y");
    no_noise.noise_levels.clear();
    EXPECT_THROW(no_noise.validate(), ParameterError);
}

TEST(Harness, RunExternalRecoversTruthOnCleanCopy) {
    TempDir tmp;
    Graph g1 = random_graph(60, 6.0, 3);
    Permutation truth = Permutation::random(60, 4);
    Graph g2 = permute(g1, truth);
    save_edge_list(g1, tmp.path() + "/g1.txt");
    save_edge_list(g2, tmp.path() + "/g2.txt");
    save_permutation(truth, tmp.path() + "/truth.txt");
    save_alignment(corrupted_truth(truth, 0.0, 60, 1), tmp.path() + "/m0.aln");

    RefineConfig cfg;
    cfg.iterations = 20;
    ExternalRunResult result =
        run_external(tmp.path() + "/g1.txt", tmp.path() + "/g2.txt", tmp.path() + "/m0.aln",
                     cfg, tmp.path() + "/truth.txt", tmp.path() + "/out");
    EXPECT_EQ(greedy_map(result.refined).pi, truth.map);
    EXPECT_DOUBLE_EQ(*result.metrics.accuracy, 1.0);
    EXPECT_TRUE(std::filesystem::exists(tmp.path() + "/out/refined.aln"));
    EXPECT_TRUE(std::filesystem::exists(tmp.path() + "/out/metrics.json"));
    EXPECT_TRUE(std::filesystem::exists(tmp.path() + "/out/trace.csv"));

    // The refined alignment file round-trips.
    AlignmentMatrix reloaded = load_alignment(tmp.path() + "/out/refined.aln", 60, 60);
    EXPECT_EQ(greedy_map(reloaded).pi, truth.map);
}

TEST(Harness, RunExternalWithoutTruthOmitsAccuracy) {
    TempDir tmp;
    Graph g1 = random_graph(40, 5.0, 5);
    Graph g2 = random_graph(40, 5.0, 6);
    save_edge_list(g1, tmp.path() + "/g1.txt");
    save_edge_list(g2, tmp.path() + "/g2.txt");
    save_alignment(random_map(40, 40, 7), tmp.path() + "/m0.aln");
    RefineConfig cfg;
    cfg.iterations = 5;
    ExternalRunResult result = run_external(tmp.path() + "/g1.txt", tmp.path() + "/g2.txt",
                                            tmp.path() + "/m0.aln", cfg, "", tmp.path() + "/out");
    EXPECT_FALSE(result.metrics.accuracy.has_value());
    auto j = nlohmann::json::parse(read_file(tmp.path() + "/out/metrics.json"));
    EXPECT_FALSE(j.contains("accuracy"));
    EXPECT_TRUE(j.contains("n_ov"));
    EXPECT_TRUE(j.contains("lccc_edges"));
}

TEST(Harness, RunExternalDimensionMismatch) {
    TempDir tmp;
    Graph g1 = random_graph(10, 3.0, 8);
    Graph g2 = random_graph(10, 3.0, 9);
    save_edge_list(g1, tmp.path() + "/g1.txt");
    save_edge_list(g2, tmp.path() + "/g2.txt");
    tmp.write("m0.aln", "25 0\n"); // node 25 does not exist
    RefineConfig cfg;
    EXPECT_THROW(run_external(tmp.path() + "/g1.txt", tmp.path() + "/g2.txt",
                              tmp.path() + "/m0.aln", cfg, "", ""),
                 DimensionError);
}

TEST(Harness, ScalingProbeValidation) {
    EXPECT_THROW(scaling_probe({100}), ParameterError);
    EXPECT_THROW(scaling_probe({100, 200}), ParameterError);
    EXPECT_THROW(scaling_probe({100, 200, 150}), ParameterError);
}

TEST(Harness, ScalingProbeSchemaAndShape) {
    ScaleOptions opts;
    opts.probe_iterations = 2;
    auto points = scaling_probe({60, 120, 240}, opts);
    ASSERT_EQ(points.size(), 6u); // three sizes x two modes
    const std::string csv = scale_csv(points);
    EXPECT_EQ(csv.rfind("n,mode,ms_per_iter\n", 0), 0u);
    std::istringstream in(csv);
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 7);
}

TEST(Harness, PeakRssIsReported) {
    EXPECT_GT(peak_rss_bytes(), 0u);
}

// Exit-code contract of the command-line tool.
TEST(HarnessCli, ExitCodes) {
    TempDir tmp;
    // Invalid config: noise list present but seeds empty.
    const std::string bad_cfg = tmp.write("bad.json", R"({"noise": [0.1], "seeds": []})");
    EXPECT_EQ(run_cli("bench --config " + bad_cfg), 1);

    // Unreadable input files.
    EXPECT_EQ(run_cli("refine --graph /nonexistent.txt --graph2 /nonexistent.txt "
                      "--m0 /nonexistent.aln"),
              2);
    EXPECT_EQ(run_cli("bench --graph /nonexistent.txt --noise 0.1 --seeds 1 --out " +
                      tmp.path() + "/bo"),
              2);

    // Dimension inconsistency between alignment and graphs.
    Graph g = random_graph(10, 3.0, 1);
    save_edge_list(g, tmp.path() + "/g.txt");
    tmp.write("m0.aln", "25 0\n");
    EXPECT_EQ(run_cli("refine --graph " + tmp.path() + "/g.txt --graph2 " + tmp.path() +
                      "/g.txt --m0 " + tmp.path() + "/m0.aln --iters 1"),
              3);

    // Malformed graph file.
    tmp.write("mal.txt", "not numbers\n");
    EXPECT_EQ(run_cli("metrics --graph " + tmp.path() + "/mal.txt --graph2 " + tmp.path() +
                      "/g.txt --m0 " + tmp.path() + "/m0.aln"),
              2);

    // Success path.
    save_alignment(corrupted_truth(Permutation::identity(10), 0.0, 10, 1),
                   tmp.path() + "/ok.aln");
    EXPECT_EQ(run_cli("metrics --graph " + tmp.path() + "/g.txt --graph2 " + tmp.path() +
                      "/g.txt --m0 " + tmp.path() + "/ok.aln --out " + tmp.path() + "/m.json"),
              0);
    auto j = nlohmann::json::parse(read_file(tmp.path() + "/m.json"));
    EXPECT_DOUBLE_EQ(j.at("n_ov").get<double>(), 100.0);

    // Refine subcommand end to end.
    EXPECT_EQ(run_cli("refine --graph " + tmp.path() + "/g.txt --graph2 " + tmp.path() +
                      "/g.txt --m0 " + tmp.path() + "/ok.aln --iters 3 --out " + tmp.path() +
                      "/ext"),
              0);
    EXPECT_TRUE(std::filesystem::exists(tmp.path() + "/ext/refined.aln"));

    // Scale subcommand rejects a single size.
    EXPECT_EQ(run_cli("scale --sizes 100"), 1);
}

TEST(HarnessCli, BenchRunsAndFlagsOverrideConfig) {
    TempDir tmp;
    const std::string cfg = tmp.write("exp.json", R"({
        "graph": {"generate": {"n": 60, "avg_degree": 6.0, "seed": 3}},
        "noise": [0.05],
        "seeds": [1, 2],
        "refine": {"iters": [5]},
        "out": ")" + tmp.path() + R"(/from_config"
    })");
    EXPECT_EQ(run_cli("bench --config " + cfg), 0);
    EXPECT_TRUE(std::filesystem::exists(tmp.path() + "/from_config/summary.csv"));
    EXPECT_TRUE(std::filesystem::exists(tmp.path() +
                                        "/from_config/p0.05_s1_dense_single_epsauto_a10_K5.trace.csv"));

    // Flags win over the config file: seed list and output dir replaced.
    EXPECT_EQ(run_cli("bench --config " + cfg + " --seeds 9 --out " + tmp.path() + "/override"),
              0);
    EXPECT_TRUE(std::filesystem::exists(
        tmp.path() + "/override/p0.05_s9_dense_single_epsauto_a10_K5.metrics.json"));
    EXPECT_FALSE(std::filesystem::exists(
        tmp.path() + "/override/p0.05_s1_dense_single_epsauto_a10_K5.metrics.json"));
}
