#pragma once

#include <algorithm>
#include <vector>

#include "refina/alignment.hpp"
#include "refina/error.hpp"
#include "refina/graph.hpp"

namespace refina {

// Matched neighborhood consistency of the pair (i in G1, j in G2) under a
// hard mapping: the Jaccard similarity between the image of i's
// neighborhood under the mapping and j's neighborhood in G2. The image is
// a set, so neighbors mapped onto the same node collapse to one element.
// Both sets empty gives 1; exactly one empty gives 0.
inline double mnc_pair(const Graph& g1, const Graph& g2, const Mapping& map,
                       NodeId i, NodeId j) {
    if (i < 0 || i >= g1.num_nodes() || j < 0 || j >= g2.num_nodes())
        throw IndexError("mnc_pair node index out of range");
    if (map.size() != g1.num_nodes())
        throw DimensionError("mapping length does not match g1");

    std::vector<NodeId> image;
    image.reserve(g1.neighbors(i).size());
    for (NodeId k : g1.neighbors(i)) image.push_back(map[k]);
    std::sort(image.begin(), image.end());
    image.erase(std::unique(image.begin(), image.end()), image.end());

    auto counterpart = g2.neighbors(j);
    std::size_t inter = 0;
    std::size_t a = 0, b = 0;
    while (a < image.size() && b < counterpart.size()) {
        if (image[a] == counterpart[b]) {
            ++inter;
            ++a;
            ++b;
        } else if (image[a] < counterpart[b]) {
            ++a;
        } else {
            ++b;
        }
    }
    const std::size_t uni = image.size() + counterpart.size() - inter;
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

// Matrix form of MNC for a binary alignment matrix: with B the 0/1
// indicator of mapped neighborhoods (B = A1*M clamped to 1, so duplicate
// images collapse exactly as in the set definition),
//
//   S_ij = (B A2)_ij / (|B_i| + deg2(j) - (B A2)_ij)
//
// which is intersection over union per pair. Entries with an empty union
// are defined as 1. For one-to-one M the clamp is a no-op and this is the
// plain product form A1*M*A2 over its complementary denominator.
inline AlignmentMatrix mnc_matrix(const Graph& g1, const Graph& g2,
                                  const AlignmentMatrix& m) {
    const NodeId n1 = g1.num_nodes();
    const NodeId n2 = g2.num_nodes();
    if (m.n1() != n1 || m.n2() != n2)
        throw DimensionError("alignment matrix does not match graph sizes");
    for (NodeId i = 0; i < n1; ++i) {
        bool ok = true;
        if (m.is_dense()) {
            for (double v : m.dense_row(i))
                if (v != 0.0 && v != 1.0) ok = false;
        } else {
            for (const auto& e : m.sparse_row(i))
                if (e.value != 1.0) ok = false;
        }
        if (!ok) throw ParameterError("mnc_matrix requires a binary alignment matrix");
    }

    AlignmentMatrix s = AlignmentMatrix::dense(n1, n2, 0.0);
    std::vector<double> mapped(static_cast<std::size_t>(n2));  // B row i
    std::vector<double> inter(static_cast<std::size_t>(n2));   // (B A2) row i
    for (NodeId i = 0; i < n1; ++i) {
        std::fill(mapped.begin(), mapped.end(), 0.0);
        std::fill(inter.begin(), inter.end(), 0.0);
        for (NodeId k : g1.neighbors(i))
            m.for_each_in_row(k, [&](NodeId l, double) {
                mapped[static_cast<std::size_t>(l)] = 1.0;
            });
        double image_size = 0.0;
        for (NodeId l = 0; l < n2; ++l) {
            if (mapped[static_cast<std::size_t>(l)] == 0.0) continue;
            image_size += 1.0;
            for (NodeId j : g2.neighbors(l)) inter[static_cast<std::size_t>(j)] += 1.0;
        }
        auto out = s.dense_values().begin() +
                   static_cast<std::ptrdiff_t>(static_cast<std::size_t>(i) *
                                               static_cast<std::size_t>(n2));
        for (NodeId j = 0; j < n2; ++j) {
            const double numer = inter[static_cast<std::size_t>(j)];
            const double denom = image_size + g2.degree(j) - numer;
            out[j] = (denom == 0.0) ? 1.0 : numer / denom;
        }
    }
    return s;
}

// Mean MNC over all nodes of G1 under the given hard mapping.
inline double average_mnc(const Graph& g1, const Graph& g2, const Mapping& map) {
    const NodeId n1 = g1.num_nodes();
    if (n1 == 0) throw ValueError("average MNC undefined for empty g1");
    double total = 0.0;
    for (NodeId i = 0; i < n1; ++i) total += mnc_pair(g1, g2, map, i, map[i]);
    return total / static_cast<double>(n1);
}

// Mean MNC over all nodes of G1 under the greedy mapping of m.
inline double average_mnc(const Graph& g1, const Graph& g2, const AlignmentMatrix& m) {
    if (g1.num_nodes() == 0) throw ValueError("average MNC undefined for empty g1");
    return average_mnc(g1, g2, greedy_map(m));
}

} // namespace refina
