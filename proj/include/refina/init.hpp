#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "refina/alignment.hpp"
#include "refina/error.hpp"
#include "refina/graph.hpp"
#include "refina/rng.hpp"

namespace refina {

enum class InitKind { DegreePrior, CorruptedTruth, RandomMap, ExternalFile };

struct InitSpec {
    InitKind kind = InitKind::DegreePrior;
    double corruption_fraction = 0.0; // corrupted_truth only
    std::uint64_t seed = 0;
    std::string path;                 // external_file only

    void validate() const {
        if (corruption_fraction < 0.0 || corruption_fraction > 1.0)
            throw ParameterError("corruption fraction must be in [0, 1]");
        if (kind == InitKind::ExternalFile && path.empty())
            throw ParameterError("external_file init requires a path");
        if (kind != InitKind::ExternalFile && !path.empty())
            throw ParameterError("path is only valid for external_file init");
    }
};

// Degree-similarity prior: row i holds the k = floor(log2((n1+n2)/2))
// nodes of G2 whose degree is closest to deg(i) (ties to the lowest node
// id), scored 1/(1 + |deg(i) - deg(j)|). k is clamped to at least 1.
inline AlignmentMatrix degree_prior(const Graph& g1, const Graph& g2) {
    const NodeId n1 = g1.num_nodes();
    const NodeId n2 = g2.num_nodes();
    if (n1 == 0 || n2 == 0) throw ParameterError("degree prior requires nonempty graphs");
    const int k = std::max(1, static_cast<int>(
        std::floor(std::log2(static_cast<double>(n1 + n2) / 2.0))));

    // Group G2's nodes by degree; ids inside a group ascend.
    std::map<int, std::vector<NodeId>> by_degree;
    for (NodeId j = 0; j < n2; ++j) by_degree[g2.degree(j)].push_back(j);

    std::vector<AlignmentMatrix::SparseRow> rows(static_cast<std::size_t>(n1));
    std::vector<NodeId> level; // candidates at the current degree distance
    for (NodeId i = 0; i < n1; ++i) {
        const int d = g1.degree(i);
        auto& row = rows[static_cast<std::size_t>(i)];
        int remaining = std::min(k, static_cast<int>(n2));
        for (int dist = 0; remaining > 0; ++dist) {
            level.clear();
            if (dist == 0) {
                if (auto it = by_degree.find(d); it != by_degree.end()) level = it->second;
            } else {
                // Two groups at equal distance merge, lower ids first.
                auto lo = by_degree.find(d - dist);
                auto hi = by_degree.find(d + dist);
                if (lo != by_degree.end() && hi != by_degree.end()) {
                    std::merge(lo->second.begin(), lo->second.end(), hi->second.begin(),
                               hi->second.end(), std::back_inserter(level));
                } else if (lo != by_degree.end()) {
                    level = lo->second;
                } else if (hi != by_degree.end()) {
                    level = hi->second;
                }
            }
            if (level.empty()) continue;
            const int take = std::min<int>(remaining, static_cast<int>(level.size()));
            const double sim = 1.0 / (1.0 + dist);
            for (int t = 0; t < take; ++t) row.push_back({level[static_cast<std::size_t>(t)], sim});
            remaining -= take;
        }
        std::sort(row.begin(), row.end(),
                  [](const auto& a, const auto& b) { return a.col < b.col; });
    }
    return AlignmentMatrix::sparse_from(n1, n2, std::move(rows));
}

// Ground truth with a ceil(fraction * n) subset of rows (chosen uniformly
// at random) reassigned to uniformly random columns. Binary one-hot rows;
// a stand-in for imperfect base-method outputs.
inline AlignmentMatrix corrupted_truth(const Permutation& truth, double fraction, NodeId n2,
                                       std::uint64_t seed) {
    if (fraction < 0.0 || fraction > 1.0)
        throw ParameterError("corruption fraction must be in [0, 1]");
    const NodeId n1 = truth.size();
    if (n1 == 0 || n2 == 0) throw ParameterError("corrupted_truth requires nonempty dimensions");
    for (NodeId i = 0; i < n1; ++i)
        if (truth[i] < 0 || truth[i] >= n2)
            throw IndexError("truth column out of range for n2");

    std::vector<NodeId> cols(truth.map.begin(), truth.map.end());
    const NodeId corrupt = static_cast<NodeId>(
        std::ceil(fraction * static_cast<double>(n1)));
    rng::Engine eng(seed);
    // Partial Fisher-Yates picks the corrupted row subset uniformly.
    std::vector<NodeId> order(static_cast<std::size_t>(n1));
    std::iota(order.begin(), order.end(), 0);
    for (NodeId t = 0; t < corrupt; ++t) {
        const NodeId pick = t + rng::below_int(eng, n1 - t);
        std::swap(order[static_cast<std::size_t>(t)], order[static_cast<std::size_t>(pick)]);
        cols[static_cast<std::size_t>(order[static_cast<std::size_t>(t)])] =
            rng::below_int(eng, n2);
    }
    std::vector<AlignmentMatrix::SparseRow> rows(static_cast<std::size_t>(n1));
    for (NodeId i = 0; i < n1; ++i)
        rows[static_cast<std::size_t>(i)] = {{cols[static_cast<std::size_t>(i)], 1.0}};
    return AlignmentMatrix::sparse_from(n1, n2, std::move(rows));
}

// One-hot rows with uniformly random columns.
inline AlignmentMatrix random_map(NodeId n1, NodeId n2, std::uint64_t seed) {
    if (n1 < 1 || n2 < 1) throw ParameterError("random_map requires n1, n2 >= 1");
    rng::Engine eng(seed);
    std::vector<AlignmentMatrix::SparseRow> rows(static_cast<std::size_t>(n1));
    for (NodeId i = 0; i < n1; ++i)
        rows[static_cast<std::size_t>(i)] = {{rng::below_int(eng, n2), 1.0}};
    return AlignmentMatrix::sparse_from(n1, n2, std::move(rows));
}

// Builds the initial alignment matrix the given InitSpec describes. The
// truth permutation is only consulted for corrupted_truth.
inline AlignmentMatrix make_initial_alignment(const InitSpec& spec, const Graph& g1,
                                              const Graph& g2,
                                              const Permutation* truth = nullptr) {
    spec.validate();
    switch (spec.kind) {
        case InitKind::DegreePrior:
            return degree_prior(g1, g2);
        case InitKind::CorruptedTruth:
            if (!truth) throw ParameterError("corrupted_truth init requires ground truth");
            return corrupted_truth(*truth, spec.corruption_fraction, g2.num_nodes(), spec.seed);
        case InitKind::RandomMap:
            return random_map(g1.num_nodes(), g2.num_nodes(), spec.seed);
        case InitKind::ExternalFile:
            return load_alignment(spec.path, g1.num_nodes(), g2.num_nodes());
    }
    throw ParameterError("unknown init kind");
}

} // namespace refina
