#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "refina/alignment.hpp"
#include "refina/error.hpp"
#include "refina/graph.hpp"
#include "refina/mnc.hpp"

namespace refina {

// Proportion of rows whose greedy argmax matches the ground truth.
inline double accuracy(const AlignmentMatrix& m, const Permutation& truth) {
    if (truth.size() != m.n1())
        throw DimensionError("ground truth length does not match alignment rows");
    return mapping_accuracy(greedy_map(m), truth);
}

// Proportion of rows whose ground-truth column appears among the top-k
// scoring columns. Coincides with accuracy at k = 1 under the shared
// lowest-column tie rule.
inline double topk_accuracy(const AlignmentMatrix& m, const Permutation& truth, int k) {
    if (k < 1) throw ParameterError("k must be at least 1");
    if (truth.size() != m.n1())
        throw DimensionError("ground truth length does not match alignment rows");
    if (m.n1() == 0) throw ValueError("top-k accuracy undefined for empty matrix");
    NodeId hits = 0;
    for (NodeId i = 0; i < m.n1(); ++i) {
        auto cols = top_k_columns(m, i, k);
        if (std::find(cols.begin(), cols.end(), truth[i]) != cols.end()) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(m.n1());
}

// The conserved network: the graph on V2 whose edges are images of G1
// edges (under the binarized alignment) that also exist in G2. Collapsed
// images (pi(u) = pi(v)) would be self-loops and are dropped.
inline Graph conserved_network(const Graph& g1, const Graph& g2, const AlignmentMatrix& m) {
    if (m.n1() != g1.num_nodes() || m.n2() != g2.num_nodes())
        throw DimensionError("alignment matrix does not match graph sizes");
    const Mapping map = greedy_map(m);
    std::vector<std::pair<NodeId, NodeId>> conserved;
    for (const auto& [u, v] : g1.edge_list()) {
        NodeId a = map[u], b = map[v];
        if (a == b) continue;
        if (a > b) std::swap(a, b);
        if (g2.has_edge(a, b)) conserved.emplace_back(a, b);
    }
    return Graph::from_edges(g2.num_nodes(), std::move(conserved));
}

// Conserved edges as a percentage of the larger graph's edge count. Both
// numerator and denominator count symmetric nonzeros (each edge twice),
// so the convention cancels.
inline double normalized_overlap(const Graph& g1, const Graph& g2, const AlignmentMatrix& m) {
    const std::int64_t denom = std::max(g1.num_edges(), g2.num_edges());
    if (denom == 0) throw ValueError("normalized overlap undefined: both graphs edgeless");
    const Graph overlap = conserved_network(g1, g2, m);
    return 100.0 * static_cast<double>(overlap.num_edges()) / static_cast<double>(denom);
}

// Edge count of the conserved network's largest connected component
// (most edges; ties broken by more nodes, then lowest node id).
inline std::int64_t lccc(const Graph& g1, const Graph& g2, const AlignmentMatrix& m) {
    const Graph overlap = conserved_network(g1, g2, m);
    const NodeId n = overlap.num_nodes();
    std::vector<NodeId> comp(static_cast<std::size_t>(n), -1);
    struct Best {
        std::int64_t edges = -1;
        std::int64_t nodes = 0;
        NodeId lowest = 0;
    } best;
    std::vector<NodeId> stack;
    for (NodeId start = 0; start < n; ++start) {
        if (comp[static_cast<std::size_t>(start)] != -1 || overlap.degree(start) == 0) continue;
        std::int64_t half_edges = 0, nodes = 0;
        stack.assign(1, start);
        comp[static_cast<std::size_t>(start)] = start;
        while (!stack.empty()) {
            NodeId u = stack.back();
            stack.pop_back();
            ++nodes;
            for (NodeId v : overlap.neighbors(u)) {
                ++half_edges;
                if (comp[static_cast<std::size_t>(v)] == -1) {
                    comp[static_cast<std::size_t>(v)] = start;
                    stack.push_back(v);
                }
            }
        }
        const std::int64_t edges = half_edges / 2;
        if (edges > best.edges || (edges == best.edges && nodes > best.nodes))
            best = {edges, nodes, start};
    }
    return best.edges < 0 ? 0 : best.edges;
}

struct MetricsReport {
    std::optional<double> accuracy;      // absent without ground truth
    std::map<int, double> topk_accuracy; // empty without ground truth
    double avg_mnc = 0.0;
    double n_ov = 0.0;                   // percentage in [0, 100]
    std::int64_t lccc_edges = 0;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        if (accuracy) j["accuracy"] = *accuracy;
        if (!topk_accuracy.empty()) {
            nlohmann::ordered_json tk;
            for (const auto& [k, v] : topk_accuracy) tk[std::to_string(k)] = v;
            j["topk"] = std::move(tk);
        }
        j["avg_mnc"] = avg_mnc;
        j["n_ov"] = n_ov;
        j["lccc_edges"] = lccc_edges;
        return j;
    }

    static MetricsReport from_json(const nlohmann::json& j) {
        MetricsReport r;
        if (j.contains("accuracy")) r.accuracy = j.at("accuracy").get<double>();
        if (j.contains("topk"))
            for (const auto& [k, v] : j.at("topk").items())
                r.topk_accuracy[std::stoi(k)] = v.get<double>();
        r.avg_mnc = j.at("avg_mnc").get<double>();
        r.n_ov = j.at("n_ov").get<double>();
        r.lccc_edges = j.at("lccc_edges").get<std::int64_t>();
        return r;
    }
};

// Full report for an alignment; accuracy and top-k only when truth given.
inline MetricsReport compute_metrics(const Graph& g1, const Graph& g2, const AlignmentMatrix& m,
                                     const Permutation* truth = nullptr,
                                     const std::vector<int>& topk_values = {1, 5, 10}) {
    MetricsReport report;
    if (truth) {
        report.accuracy = accuracy(m, *truth);
        for (int k : topk_values)
            if (k >= 1) report.topk_accuracy[k] = topk_accuracy(m, *truth, k);
    }
    report.avg_mnc = average_mnc(g1, g2, m);
    if (std::max(g1.num_edges(), g2.num_edges()) > 0)
        report.n_ov = normalized_overlap(g1, g2, m);
    report.lccc_edges = lccc(g1, g2, m);
    return report;
}

} // namespace refina
