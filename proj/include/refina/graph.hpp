#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "refina/error.hpp"
#include "refina/rng.hpp"

namespace refina {

using NodeId = int;

// Undirected, unweighted, simple graph in CSR form. Neighbor lists are
// sorted ascending; construction symmetrizes, deduplicates, and drops
// self-loops. Instances are immutable after construction.
class Graph {
public:
    Graph() : n_(0), offsets_(1, 0) {}

    static Graph empty(NodeId n) {
        Graph g;
        g.n_ = n;
        g.offsets_.assign(static_cast<std::size_t>(n) + 1, 0);
        return g;
    }

    // Builds the graph over nodes 0..n-1 from an arbitrary edge list.
    // Self-loops are dropped, parallel/duplicate/reversed edges collapse.
    static Graph from_edges(NodeId n, std::vector<std::pair<NodeId, NodeId>> edges) {
        if (n < 0) throw ParameterError("node count must be nonnegative");
        for (auto& [u, v] : edges) {
            if (u < 0 || u >= n || v < 0 || v >= n)
                throw IndexError("edge endpoint out of range");
            if (u > v) std::swap(u, v);
        }
        std::erase_if(edges, [](const auto& e) { return e.first == e.second; });
        std::sort(edges.begin(), edges.end());
        edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

        Graph g;
        g.n_ = n;
        std::vector<int> degree(static_cast<std::size_t>(n), 0);
        for (const auto& [u, v] : edges) {
            ++degree[static_cast<std::size_t>(u)];
            ++degree[static_cast<std::size_t>(v)];
        }
        g.offsets_.assign(static_cast<std::size_t>(n) + 1, 0);
        for (NodeId i = 0; i < n; ++i)
            g.offsets_[static_cast<std::size_t>(i) + 1] =
                g.offsets_[static_cast<std::size_t>(i)] + degree[static_cast<std::size_t>(i)];
        g.adj_.resize(static_cast<std::size_t>(g.offsets_.back()));
        std::vector<std::int64_t> cursor(g.offsets_.begin(), g.offsets_.end() - 1);
        for (const auto& [u, v] : edges) {
            g.adj_[static_cast<std::size_t>(cursor[static_cast<std::size_t>(u)]++)] = v;
            g.adj_[static_cast<std::size_t>(cursor[static_cast<std::size_t>(v)]++)] = u;
        }
        // Sorted input edge order makes each neighbor list come out sorted
        // for the u-side but not the v-side; sort rows to be safe.
        for (NodeId i = 0; i < n; ++i) {
            auto row = g.mutable_neighbors(i);
            std::sort(row.begin(), row.end());
        }
        return g;
    }

    NodeId num_nodes() const { return n_; }

    std::int64_t num_edges() const { return static_cast<std::int64_t>(adj_.size()) / 2; }

    int degree(NodeId i) const {
        check_node(i);
        return static_cast<int>(offsets_[static_cast<std::size_t>(i) + 1] -
                                offsets_[static_cast<std::size_t>(i)]);
    }

    std::span<const NodeId> neighbors(NodeId i) const {
        check_node(i);
        return {adj_.data() + offsets_[static_cast<std::size_t>(i)],
                adj_.data() + offsets_[static_cast<std::size_t>(i) + 1]};
    }

    bool has_edge(NodeId u, NodeId v) const {
        auto row = neighbors(u);
        return std::binary_search(row.begin(), row.end(), v);
    }

    // Canonical (u < v) edge list, sorted.
    std::vector<std::pair<NodeId, NodeId>> edge_list() const {
        std::vector<std::pair<NodeId, NodeId>> edges;
        edges.reserve(static_cast<std::size_t>(num_edges()));
        for (NodeId u = 0; u < n_; ++u)
            for (NodeId v : neighbors(u))
                if (u < v) edges.emplace_back(u, v);
        return edges;
    }

    // Full-scan structural check: symmetry, sortedness, no self-loops or
    // duplicates. Used by tests after every graph-producing operation.
    bool check_invariants() const {
        if (offsets_.size() != static_cast<std::size_t>(n_) + 1) return false;
        if (offsets_.front() != 0 ||
            offsets_.back() != static_cast<std::int64_t>(adj_.size()))
            return false;
        for (NodeId i = 0; i < n_; ++i) {
            auto row = neighbors(i);
            for (std::size_t k = 0; k < row.size(); ++k) {
                NodeId j = row[k];
                if (j < 0 || j >= n_ || j == i) return false;
                if (k > 0 && row[k - 1] >= j) return false;
                if (!has_edge(j, i)) return false;
            }
        }
        return true;
    }

    bool operator==(const Graph& other) const = default;

private:
    std::span<NodeId> mutable_neighbors(NodeId i) {
        return {adj_.data() + offsets_[static_cast<std::size_t>(i)],
                adj_.data() + offsets_[static_cast<std::size_t>(i) + 1]};
    }

    void check_node(NodeId i) const {
        if (i < 0 || i >= n_) throw IndexError("node index out of range");
    }

    NodeId n_;
    std::vector<std::int64_t> offsets_;
    std::vector<NodeId> adj_;
};

// A bijection on 0..n-1. map[i] is the counterpart of node i.
struct Permutation {
    std::vector<NodeId> map;

    Permutation() = default;
    explicit Permutation(std::vector<NodeId> m) : map(std::move(m)) { validate(); }

    NodeId size() const { return static_cast<NodeId>(map.size()); }
    NodeId operator[](NodeId i) const { return map[static_cast<std::size_t>(i)]; }

    static Permutation identity(NodeId n) {
        std::vector<NodeId> m(static_cast<std::size_t>(n));
        std::iota(m.begin(), m.end(), 0);
        return Permutation(std::move(m));
    }

    static Permutation random(NodeId n, std::uint64_t seed) {
        std::vector<NodeId> m(static_cast<std::size_t>(n));
        std::iota(m.begin(), m.end(), 0);
        rng::Engine eng(seed);
        rng::shuffle(m, eng);
        return Permutation(std::move(m));
    }

    Permutation inverse() const {
        std::vector<NodeId> inv(map.size());
        for (std::size_t i = 0; i < map.size(); ++i)
            inv[static_cast<std::size_t>(map[i])] = static_cast<NodeId>(i);
        return Permutation(std::move(inv));
    }

private:
    void validate() const {
        const NodeId n = size();
        std::vector<bool> seen(static_cast<std::size_t>(n), false);
        for (NodeId v : map) {
            if (v < 0 || v >= n || seen[static_cast<std::size_t>(v)])
                throw ParameterError("permutation is not a bijection on 0..n-1");
            seen[static_cast<std::size_t>(v)] = true;
        }
    }
};

enum class NoiseKind { RemoveEdges, AddEdges };

struct NoiseSpec {
    NoiseKind kind = NoiseKind::RemoveEdges;
    double p = 0.0;
    std::uint64_t seed = 0;
};

// --- edge-list I/O ---------------------------------------------------------
//
// Format: UTF-8 text, one edge "u v" per line, whitespace-separated
// nonnegative integers; '#' starts a comment line; blank lines ignored.
// Node ids are dense 0-based and are NOT remapped, so a file mentioning
// only ids 0 and 9 yields a 10-node graph with 8 isolated nodes.

inline Graph load_edge_list(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open edge list file: " + path);

    std::vector<std::pair<NodeId, NodeId>> edges;
    NodeId max_id = -1;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::size_t start = line.find_first_not_of(" \t\r");
        if (start == std::string::npos || line[start] == '#') continue;
        std::istringstream ss(line);
        long long u, v;
        std::string extra;
        if (!(ss >> u >> v) || (ss >> extra) || u < 0 || v < 0)
            throw ParseError("expected two nonnegative integers", line_no);
        max_id = std::max({max_id, static_cast<NodeId>(u), static_cast<NodeId>(v)});
        edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
    }
    return Graph::from_edges(max_id + 1, std::move(edges));
}

inline void save_edge_list(const Graph& g, std::ostream& out) {
    for (const auto& [u, v] : g.edge_list()) out << u << ' ' << v << '\n';
}

inline void save_edge_list(const Graph& g, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open file for writing: " + path);
    save_edge_list(g, out);
}

// Permutation file: lines "i j", node i in G1 corresponds to node j in G2.
inline Permutation load_permutation(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open permutation file: " + path);
    std::vector<std::pair<NodeId, NodeId>> pairs;
    std::string line;
    long line_no = 0;
    NodeId max_id = -1;
    while (std::getline(in, line)) {
        ++line_no;
        std::size_t start = line.find_first_not_of(" \t\r");
        if (start == std::string::npos || line[start] == '#') continue;
        std::istringstream ss(line);
        long long i, j;
        std::string extra;
        if (!(ss >> i >> j) || (ss >> extra) || i < 0 || j < 0)
            throw ParseError("expected two nonnegative integers", line_no);
        max_id = std::max({max_id, static_cast<NodeId>(i), static_cast<NodeId>(j)});
        pairs.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(j));
    }
    std::vector<NodeId> map(static_cast<std::size_t>(max_id) + 1, -1);
    if (pairs.size() != map.size())
        throw ParseError("permutation file must give every node exactly once");
    for (const auto& [i, j] : pairs) {
        if (map[static_cast<std::size_t>(i)] != -1)
            throw ParseError("node " + std::to_string(i) + " mapped twice");
        map[static_cast<std::size_t>(i)] = j;
    }
    return Permutation(std::move(map));
}

inline void save_permutation(const Permutation& perm, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open file for writing: " + path);
    for (NodeId i = 0; i < perm.size(); ++i) out << i << ' ' << perm[i] << '\n';
}

// --- graph transforms ------------------------------------------------------

// Relabels nodes: edge (i,j) maps to (perm[i], perm[j]).
inline Graph permute(const Graph& g, const Permutation& perm) {
    if (perm.size() != g.num_nodes())
        throw DimensionError("permutation length does not match node count");
    auto edges = g.edge_list();
    for (auto& [u, v] : edges) {
        u = perm[u];
        v = perm[v];
    }
    return Graph::from_edges(g.num_nodes(), std::move(edges));
}

// RemoveEdges: deletes each edge independently with probability p.
// AddEdges: inserts ceil(p*m) uniformly random non-edges. Both are
// deterministic functions of (graph, spec.seed).
inline Graph apply_noise(const Graph& g, const NoiseSpec& spec) {
    if (spec.p < 0.0 || spec.p > 1.0)
        throw ParameterError("noise probability must be in [0, 1]");
    rng::Engine eng(spec.seed);
    auto edges = g.edge_list();
    const std::int64_t m = static_cast<std::int64_t>(edges.size());

    if (spec.kind == NoiseKind::RemoveEdges) {
        if (spec.p > 0.0) {
            std::erase_if(edges, [&](const auto&) { return rng::uniform01(eng) < spec.p; });
        }
        return Graph::from_edges(g.num_nodes(), std::move(edges));
    }

    // AddEdges
    const NodeId n = g.num_nodes();
    const std::int64_t max_edges = static_cast<std::int64_t>(n) * (n - 1) / 2;
    std::int64_t want = static_cast<std::int64_t>(std::ceil(spec.p * static_cast<double>(m)));
    want = std::min(want, max_edges - m);
    if (want <= 0) return g;

    if (m + want > max_edges / 2) {
        // Dense regime: enumerate non-edges and sample without replacement.
        std::vector<std::pair<NodeId, NodeId>> non_edges;
        non_edges.reserve(static_cast<std::size_t>(max_edges - m));
        for (NodeId u = 0; u < n; ++u)
            for (NodeId v = u + 1; v < n; ++v)
                if (!g.has_edge(u, v)) non_edges.emplace_back(u, v);
        for (std::int64_t k = 0; k < want; ++k) {
            std::size_t pick = k + static_cast<std::size_t>(
                rng::below(eng, non_edges.size() - static_cast<std::size_t>(k)));
            std::swap(non_edges[static_cast<std::size_t>(k)], non_edges[pick]);
            edges.push_back(non_edges[static_cast<std::size_t>(k)]);
        }
    } else {
        std::vector<std::pair<NodeId, NodeId>> added;
        added.reserve(static_cast<std::size_t>(want));
        auto already_added = [&](NodeId u, NodeId v) {
            return std::find(added.begin(), added.end(), std::make_pair(u, v)) != added.end();
        };
        while (static_cast<std::int64_t>(added.size()) < want) {
            NodeId u = rng::below_int(eng, n);
            NodeId v = rng::below_int(eng, n);
            if (u == v) continue;
            if (u > v) std::swap(u, v);
            if (g.has_edge(u, v) || already_added(u, v)) continue;
            added.emplace_back(u, v);
        }
        edges.insert(edges.end(), added.begin(), added.end());
    }
    return Graph::from_edges(n, std::move(edges));
}

// Erdos-Renyi G(n, p) with p = avg_degree / (n - 1), sampled by geometric
// edge skipping so generation is O(m) rather than O(n^2).
inline Graph random_graph(NodeId n, double avg_degree, std::uint64_t seed) {
    if (n < 0) throw ParameterError("node count must be nonnegative");
    if (avg_degree < 0.0) throw ParameterError("average degree must be nonnegative");
    if (n <= 1) {
        if (avg_degree > 0.0) throw ParameterError("average degree exceeds n - 1");
        return Graph::empty(n);
    }
    const double p = avg_degree / static_cast<double>(n - 1);
    if (p > 1.0) throw ParameterError("average degree exceeds n - 1");

    std::vector<std::pair<NodeId, NodeId>> edges;
    edges.reserve(static_cast<std::size_t>(avg_degree * n / 2 * 1.2) + 16);
    if (p >= 1.0) {
        for (NodeId u = 0; u < n; ++u)
            for (NodeId v = u + 1; v < n; ++v) edges.emplace_back(u, v);
        return Graph::from_edges(n, std::move(edges));
    }
    if (p > 0.0) {
        rng::Engine eng(seed);
        const double log1mp = std::log1p(-p);
        // Walk the strict upper triangle (u,v), u<v, in lexicographic order
        // with geometric jumps; v==u marks "before the first column of row u".
        NodeId u = 0, v = 0;
        for (;;) {
            double r = rng::uniform01(eng);
            std::int64_t skip = static_cast<std::int64_t>(
                std::floor(std::log1p(-r) / log1mp));
            std::int64_t pos = static_cast<std::int64_t>(v) + 1 + skip;
            while (u < n - 1 && pos >= n) {
                pos = (u + 2) + (pos - n); // row u+1 starts at column u+2
                ++u;
            }
            if (u >= n - 1) break;
            v = static_cast<NodeId>(pos);
            edges.emplace_back(u, v);
        }
    }
    return Graph::from_edges(n, std::move(edges));
}

} // namespace refina
