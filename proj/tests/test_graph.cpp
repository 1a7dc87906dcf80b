#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "refina/graph.hpp"
#include "test_support.hpp"

using namespace refina;
using testsupport::TempDir;

TEST(GraphCore, FromEdgesSymmetrizesAndSorts) {
    Graph g = Graph::from_edges(4, {{2, 1}, {0, 1}, {1, 2}, {3, 3}});
    EXPECT_EQ(g.num_nodes(), 4);
    EXPECT_EQ(g.num_edges(), 2); // duplicate collapsed, self-loop dropped
    ASSERT_TRUE(g.check_invariants());
    EXPECT_TRUE(g.has_edge(1, 0));
    EXPECT_TRUE(g.has_edge(1, 2));
    EXPECT_EQ(g.degree(3), 0);
}

TEST(GraphCore, LoadEdgeListBasic) {
    TempDir tmp;
    Graph g = load_edge_list(tmp.write("g.txt", "0 1\n1 2\n"));
    EXPECT_EQ(g.num_nodes(), 3);
    EXPECT_EQ(g.num_edges(), 2);
    auto adj1 = g.neighbors(1);
    ASSERT_EQ(adj1.size(), 2u);
    EXPECT_EQ(adj1[0], 0);
    EXPECT_EQ(adj1[1], 2);
}

TEST(GraphCore, LoadEdgeListKeepsIdGapsAsIsolatedNodes) {
    TempDir tmp;
    Graph g = load_edge_list(tmp.write("g.txt", "0 9\n"));
    EXPECT_EQ(g.num_nodes(), 10);
    EXPECT_EQ(g.num_edges(), 1);
    for (NodeId i = 1; i < 9; ++i) EXPECT_EQ(g.degree(i), 0);
}

TEST(GraphCore, LoadEdgeListDedupAndSelfLoop) {
    TempDir tmp;
    Graph g = load_edge_list(tmp.write("g.txt", "0 1\n1 0\n0 0\n"));
    EXPECT_EQ(g.num_nodes(), 2);
    EXPECT_EQ(g.num_edges(), 1);
}

TEST(GraphCore, LoadEdgeListCommentsAndBlankLines) {
    TempDir tmp;
    Graph g = load_edge_list(tmp.write("g.txt", "# header\n\n0 1\n  # indented comment\n1 2\n"));
    EXPECT_EQ(g.num_edges(), 2);
}

TEST(GraphCore, LoadEdgeListMalformedLine) {
    TempDir tmp;
    try {
        load_edge_list(tmp.write("g.txt", "a b\n"));
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 1);
    }
    EXPECT_THROW(load_edge_list(tmp.write("g2.txt", "0 1 2\n")), ParseError);
    EXPECT_THROW(load_edge_list(tmp.write("g3.txt", "0 -1\n")), ParseError);
}

TEST(GraphCore, LoadEdgeListEmptyFile) {
    TempDir tmp;
    Graph g = load_edge_list(tmp.write("g.txt", ""));
    EXPECT_EQ(g.num_nodes(), 0);
    EXPECT_EQ(g.num_edges(), 0);
}

TEST(GraphCore, LoadEdgeListMissingFile) {
    EXPECT_THROW(load_edge_list("/nonexistent/path/file.txt"), IoError);
}

TEST(GraphCore, SaveLoadRoundTrip) {
    TempDir tmp;
    Graph g = random_graph(40, 5.0, 7);
    save_edge_list(g, tmp.path() + "/g.txt");
    Graph h = load_edge_list(tmp.path() + "/g.txt");
    EXPECT_EQ(g, h);
}

TEST(GraphCore, PermuteTriangleIsTriangle) {
    Graph k3 = Graph::from_edges(3, {{0, 1}, {1, 2}, {0, 2}});
    Graph p = permute(k3, Permutation({1, 2, 0}));
    EXPECT_EQ(p, k3); // K3 is vertex-transitive
}

TEST(GraphCore, PermutePathRelabels) {
    Graph path = Graph::from_edges(3, {{0, 1}, {1, 2}});
    Graph p = permute(path, Permutation({2, 0, 1}));
    EXPECT_TRUE(p.has_edge(2, 0));
    EXPECT_TRUE(p.has_edge(0, 1));
    EXPECT_EQ(p.num_edges(), 2);
}

TEST(GraphCore, PermuteIdentity) {
    Graph g = random_graph(30, 4.0, 3);
    EXPECT_EQ(permute(g, Permutation::identity(30)), g);
}

TEST(GraphCore, PermuteLengthMismatch) {
    Graph g = Graph::from_edges(3, {{0, 1}});
    EXPECT_THROW(permute(g, Permutation({1, 0})), DimensionError);
}

TEST(GraphCore, PermuteInvertible) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Graph g = random_graph(60, 6.0, seed);
        Permutation perm = Permutation::random(60, seed + 100);
        Graph back = permute(permute(g, perm), perm.inverse());
        EXPECT_EQ(back, g) << "seed " << seed;
    }
}

TEST(GraphCore, NoiseRemoveZeroIsIdentity) {
    Graph g = random_graph(50, 6.0, 1);
    Graph h = apply_noise(g, {NoiseKind::RemoveEdges, 0.0, 9});
    EXPECT_EQ(h, g);
}

TEST(GraphCore, NoiseRemoveAllEmptiesEdgeSet) {
    Graph g = random_graph(50, 6.0, 2);
    Graph h = apply_noise(g, {NoiseKind::RemoveEdges, 1.0, 9});
    EXPECT_EQ(h.num_edges(), 0);
    EXPECT_EQ(h.num_nodes(), 50);
}

TEST(GraphCore, NoiseRemoveSubsetProperty) {
    Graph g = random_graph(80, 8.0, 3);
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        Graph h = apply_noise(g, {NoiseKind::RemoveEdges, 0.4, seed});
        ASSERT_TRUE(h.check_invariants());
        for (const auto& [u, v] : h.edge_list()) EXPECT_TRUE(g.has_edge(u, v));
    }
}

// Binomial oracle: deleting each of m edges independently with p = 0.1
// keeps the mean edge count at m(1-p) with sigma = sqrt(m p (1-p)).
TEST(GraphCore, NoiseRemoveBinomialMonteCarlo) {
    Graph g = random_graph(2000, 10.0, 42);
    const double m = static_cast<double>(g.num_edges());
    const double p = 0.1;
    const double sigma = std::sqrt(m * p * (1.0 - p));
    const int trials = 120;
    double sum = 0.0;
    int beyond_5sigma = 0;
    for (int seed = 0; seed < trials; ++seed) {
        Graph h = apply_noise(g, {NoiseKind::RemoveEdges, p, static_cast<std::uint64_t>(seed)});
        const double kept = static_cast<double>(h.num_edges());
        sum += kept;
        if (std::abs(kept - m * (1.0 - p)) > 5.0 * sigma) ++beyond_5sigma;
    }
    const double mean = sum / trials;
    EXPECT_NEAR(mean, m * (1.0 - p), 3.0 * sigma / std::sqrt(static_cast<double>(trials)));
    EXPECT_EQ(beyond_5sigma, 0);
}

TEST(GraphCore, NoiseAddInsertsRequestedCount) {
    Graph g = random_graph(60, 5.0, 4);
    const std::int64_t m = g.num_edges();
    Graph h = apply_noise(g, {NoiseKind::AddEdges, 0.25, 11});
    ASSERT_TRUE(h.check_invariants());
    EXPECT_EQ(h.num_edges(), m + static_cast<std::int64_t>(std::ceil(0.25 * double(m))));
    for (const auto& [u, v] : g.edge_list()) EXPECT_TRUE(h.has_edge(u, v));
}

TEST(GraphCore, NoiseAddNearCompleteGraphCapped) {
    // K5 minus one edge: only one non-edge available.
    Graph g = Graph::from_edges(
        5, {{0, 1}, {0, 2}, {0, 3}, {0, 4}, {1, 2}, {1, 3}, {1, 4}, {2, 3}, {2, 4}});
    Graph h = apply_noise(g, {NoiseKind::AddEdges, 1.0, 5});
    EXPECT_EQ(h.num_edges(), 10);
    EXPECT_TRUE(h.has_edge(3, 4));
}

TEST(GraphCore, NoiseDeterministicGivenSeed) {
    Graph g = random_graph(100, 7.0, 6);
    for (NoiseKind kind : {NoiseKind::RemoveEdges, NoiseKind::AddEdges}) {
        Graph a = apply_noise(g, {kind, 0.2, 77});
        Graph b = apply_noise(g, {kind, 0.2, 77});
        EXPECT_EQ(a, b);
        Graph c = apply_noise(g, {kind, 0.2, 78});
        EXPECT_NE(a, c); // different seed, different mask (overwhelmingly)
    }
}

TEST(GraphCore, NoiseInvalidProbability) {
    Graph g = Graph::from_edges(2, {{0, 1}});
    EXPECT_THROW(apply_noise(g, {NoiseKind::RemoveEdges, -0.1, 0}), ParameterError);
    EXPECT_THROW(apply_noise(g, {NoiseKind::RemoveEdges, 1.5, 0}), ParameterError);
}

TEST(GraphCore, RandomGraphEmpty) {
    Graph g = random_graph(0, 0.0, 1);
    EXPECT_EQ(g.num_nodes(), 0);
    EXPECT_EQ(g.num_edges(), 0);
}

TEST(GraphCore, RandomGraphForcedEdge) {
    Graph g = random_graph(2, 1.0, 123); // p = 1: the single pair is forced
    EXPECT_EQ(g.num_edges(), 1);
    EXPECT_TRUE(g.has_edge(0, 1));
}

TEST(GraphCore, RandomGraphDegreeTooLarge) {
    EXPECT_THROW(random_graph(10, 9.5, 0), ParameterError);
    EXPECT_THROW(random_graph(10, -1.0, 0), ParameterError);
}

// Binomial oracle for the generator: m ~ Bin(C(n,2), avg/(n-1)) so the
// mean is n*avg/2 = 5000 for n = 1000, avg = 10.
TEST(GraphCore, RandomGraphEdgeCountMonteCarlo) {
    const double n = 1000.0, avg = 10.0;
    const double pairs = n * (n - 1) / 2.0;
    const double p = avg / (n - 1.0);
    const double sigma = std::sqrt(pairs * p * (1.0 - p));
    const int trials = 100;
    double sum = 0.0;
    int beyond_5sigma = 0;
    for (int seed = 0; seed < trials; ++seed) {
        Graph g = random_graph(1000, avg, static_cast<std::uint64_t>(seed));
        ASSERT_TRUE(g.check_invariants());
        const double m = static_cast<double>(g.num_edges());
        sum += m;
        if (std::abs(m - 5000.0) > 5.0 * sigma) ++beyond_5sigma;
    }
    EXPECT_NEAR(sum / trials, 5000.0, 3.0 * sigma / std::sqrt(static_cast<double>(trials)));
    EXPECT_EQ(beyond_5sigma, 0);
}

TEST(GraphCore, RandomGraphDeterministic) {
    EXPECT_EQ(random_graph(200, 6.0, 9), random_graph(200, 6.0, 9));
}

TEST(GraphCore, PermutationValidation) {
    EXPECT_THROW(Permutation({0, 0, 1}), ParameterError);
    EXPECT_THROW(Permutation({0, 3, 1}), ParameterError);
    Permutation p({2, 0, 1});
    Permutation inv = p.inverse();
    for (NodeId i = 0; i < 3; ++i) EXPECT_EQ(inv[p[i]], i);
}

TEST(GraphCore, PermutationFileRoundTrip) {
    TempDir tmp;
    Permutation p = Permutation::random(25, 5);
    save_permutation(p, tmp.path() + "/p.txt");
    Permutation q = load_permutation(tmp.path() + "/p.txt");
    EXPECT_EQ(p.map, q.map);
}

TEST(GraphCore, PermutationFileRejectsNonBijection) {
    TempDir tmp;
    // duplicate target column
    EXPECT_THROW(load_permutation(tmp.write("p.txt", "0 1\n1 1\n")), ParameterError);
    // node 0 mapped twice
    EXPECT_THROW(load_permutation(tmp.write("p2.txt", "0 1\n0 0\n")), ParseError);
    // node 2 referenced as a target but never given a row
    EXPECT_THROW(load_permutation(tmp.write("p3.txt", "0 2\n1 0\n")), ParseError);
}
