#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "refina/error.hpp"
#include "refina/graph.hpp"

namespace refina {

// Correspondence scores between nodes of G1 (rows) and G2 (columns).
// Dense storage is a row-major n1*n2 buffer; sparse storage keeps only
// strictly positive entries per row, sorted by column. All values are
// nonnegative in either storage.
class AlignmentMatrix {
public:
    struct Entry {
        NodeId col;
        double value;
        bool operator==(const Entry&) const = default;
    };
    using SparseRow = std::vector<Entry>;

    AlignmentMatrix() : n1_(0), n2_(0), dense_(false) {}

    static AlignmentMatrix dense(NodeId n1, NodeId n2, double fill = 0.0) {
        check_dims(n1, n2);
        if (fill < 0.0) throw ValueError("alignment values must be nonnegative");
        AlignmentMatrix m;
        m.n1_ = n1;
        m.n2_ = n2;
        m.dense_ = true;
        m.note_dense_alloc(n1, n2);
        m.values_.assign(cells(n1, n2), fill);
        return m;
    }

    static AlignmentMatrix dense_from(NodeId n1, NodeId n2, std::vector<double> values) {
        check_dims(n1, n2);
        if (values.size() != cells(n1, n2))
            throw DimensionError("dense value buffer has wrong size");
        for (double v : values)
            if (v < 0.0) throw ValueError("alignment values must be nonnegative");
        AlignmentMatrix m;
        m.n1_ = n1;
        m.n2_ = n2;
        m.dense_ = true;
        m.note_dense_alloc(n1, n2);
        m.values_ = std::move(values);
        return m;
    }

    static AlignmentMatrix sparse(NodeId n1, NodeId n2) {
        check_dims(n1, n2);
        AlignmentMatrix m;
        m.n1_ = n1;
        m.n2_ = n2;
        m.dense_ = false;
        m.rows_.assign(static_cast<std::size_t>(n1), {});
        return m;
    }

    static AlignmentMatrix sparse_from(NodeId n1, NodeId n2, std::vector<SparseRow> rows) {
        check_dims(n1, n2);
        if (rows.size() != static_cast<std::size_t>(n1))
            throw DimensionError("sparse row count has wrong size");
        for (const auto& row : rows) {
            NodeId prev = -1;
            for (const auto& [col, value] : row) {
                if (col < 0 || col >= n2) throw IndexError("sparse column out of range");
                if (col <= prev) throw ValueError("sparse row not sorted/unique by column");
                if (value <= 0.0) throw ValueError("sparse values must be strictly positive");
                prev = col;
            }
        }
        AlignmentMatrix m;
        m.n1_ = n1;
        m.n2_ = n2;
        m.dense_ = false;
        m.rows_ = std::move(rows);
        return m;
    }

    NodeId n1() const { return n1_; }
    NodeId n2() const { return n2_; }
    bool is_dense() const { return dense_; }

    double at(NodeId i, NodeId j) const {
        check_index(i, j);
        if (dense_) return values_[idx(i, j)];
        const auto& row = rows_[static_cast<std::size_t>(i)];
        auto it = std::lower_bound(row.begin(), row.end(), j,
                                   [](const Entry& e, NodeId c) { return e.col < c; });
        return (it != row.end() && it->col == j) ? it->value : 0.0;
    }

    std::span<const double> dense_row(NodeId i) const {
        check_row(i);
        return {values_.data() + idx(i, 0), static_cast<std::size_t>(n2_)};
    }

    const SparseRow& sparse_row(NodeId i) const {
        check_row(i);
        return rows_[static_cast<std::size_t>(i)];
    }

    // Raw buffer access for the refinement inner loops.
    std::vector<double>& dense_values() { return values_; }
    const std::vector<double>& dense_values() const { return values_; }
    std::vector<SparseRow>& sparse_rows() { return rows_; }
    const std::vector<SparseRow>& sparse_rows() const { return rows_; }

    std::size_t nnz() const {
        if (dense_) {
            std::size_t count = 0;
            for (double v : values_)
                if (v != 0.0) ++count;
            return count;
        }
        std::size_t count = 0;
        for (const auto& row : rows_) count += row.size();
        return count;
    }

    // Visits the stored entries of row i in ascending column order.
    template <typename Fn> // Fn(NodeId col, double value)
    void for_each_in_row(NodeId i, Fn&& fn) const {
        check_row(i);
        if (dense_) {
            const double* row = values_.data() + idx(i, 0);
            for (NodeId j = 0; j < n2_; ++j)
                if (row[j] != 0.0) fn(j, row[j]);
        } else {
            for (const auto& [col, value] : rows_[static_cast<std::size_t>(i)])
                fn(col, value);
        }
    }

    AlignmentMatrix to_dense() const {
        if (dense_) return *this;
        AlignmentMatrix m = dense(n1_, n2_, 0.0);
        for (NodeId i = 0; i < n1_; ++i)
            for (const auto& [col, value] : rows_[static_cast<std::size_t>(i)])
                m.values_[m.idx(i, col)] = value;
        return m;
    }

    AlignmentMatrix to_sparse() const {
        if (!dense_) return *this;
        std::vector<SparseRow> rows(static_cast<std::size_t>(n1_));
        for (NodeId i = 0; i < n1_; ++i) {
            const double* row = values_.data() + idx(i, 0);
            for (NodeId j = 0; j < n2_; ++j)
                if (row[j] > 0.0) rows[static_cast<std::size_t>(i)].push_back({j, row[j]});
        }
        return sparse_from(n1_, n2_, std::move(rows));
    }

    // Largest dense buffer (in cells) allocated so far in this process.
    // Lets tests assert that sparse-mode runs never materialize an n1 x n2
    // dense matrix.
    static std::size_t max_dense_cells_allocated() { return dense_alloc_stat().load(); }
    static void reset_dense_alloc_stat() { dense_alloc_stat().store(0); }

private:
    static std::atomic<std::size_t>& dense_alloc_stat() {
        static std::atomic<std::size_t> stat{0};
        return stat;
    }

    void note_dense_alloc(NodeId n1, NodeId n2) {
        auto& stat = dense_alloc_stat();
        std::size_t want = cells(n1, n2);
        std::size_t cur = stat.load();
        while (cur < want && !stat.compare_exchange_weak(cur, want)) {
        }
    }

    static void check_dims(NodeId n1, NodeId n2) {
        if (n1 < 0 || n2 < 0) throw DimensionError("matrix dimensions must be nonnegative");
    }

    static std::size_t cells(NodeId n1, NodeId n2) {
        return static_cast<std::size_t>(n1) * static_cast<std::size_t>(n2);
    }

    std::size_t idx(NodeId i, NodeId j) const {
        return static_cast<std::size_t>(i) * static_cast<std::size_t>(n2_) +
               static_cast<std::size_t>(j);
    }

    void check_row(NodeId i) const {
        if (i < 0 || i >= n1_) throw IndexError("row index out of range");
    }

    void check_index(NodeId i, NodeId j) const {
        check_row(i);
        if (j < 0 || j >= n2_) throw IndexError("column index out of range");
    }

    NodeId n1_, n2_;
    bool dense_;
    std::vector<double> values_;  // dense storage
    std::vector<SparseRow> rows_; // sparse storage
};

// Hard node correspondence pi: V1 -> V2, not necessarily injective.
// zero_rows lists rows that had no positive entry and fell back to column 0.
struct Mapping {
    std::vector<NodeId> pi;
    std::vector<NodeId> zero_rows;

    NodeId operator[](NodeId i) const { return pi[static_cast<std::size_t>(i)]; }
    NodeId size() const { return static_cast<NodeId>(pi.size()); }

    static Mapping from_permutation(const Permutation& p) {
        Mapping m;
        m.pi = p.map;
        return m;
    }
};

// Fraction of rows whose mapped column matches the ground truth.
inline double mapping_accuracy(const Mapping& map, const Permutation& truth) {
    if (map.size() != truth.size())
        throw DimensionError("mapping and ground truth differ in length");
    if (map.size() == 0) throw ValueError("accuracy undefined for empty mapping");
    NodeId correct = 0;
    for (NodeId i = 0; i < map.size(); ++i)
        if (map[i] == truth[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(map.size());
}

// Greedy alignment: pi[i] = argmax_j M_ij, ties broken by lowest column.
// An all-zero row maps to column 0 and is recorded in zero_rows.
inline Mapping greedy_map(const AlignmentMatrix& m) {
    if (m.n1() < 1 || m.n2() < 1) throw DimensionError("greedy_map requires a nonempty matrix");
    Mapping out;
    out.pi.resize(static_cast<std::size_t>(m.n1()));
    for (NodeId i = 0; i < m.n1(); ++i) {
        NodeId best_col = 0;
        double best_val = 0.0;
        bool any = false;
        m.for_each_in_row(i, [&](NodeId j, double v) {
            if (!any || v > best_val) {
                any = true;
                best_val = v;
                best_col = j;
            }
        });
        if (!any) out.zero_rows.push_back(i);
        out.pi[static_cast<std::size_t>(i)] = any ? best_col : 0;
    }
    return out;
}

// The min(k, #candidates) columns of row i with the largest values,
// value-descending with ties by lowest column. Dense rows consider every
// column; sparse rows consider stored nonzeros only.
inline std::vector<NodeId> top_k_columns(const AlignmentMatrix& m, NodeId i, int k) {
    if (k < 1) throw ParameterError("k must be at least 1");
    if (i < 0 || i >= m.n1()) throw IndexError("row index out of range");

    std::vector<AlignmentMatrix::Entry> candidates;
    if (m.is_dense()) {
        auto row = m.dense_row(i);
        candidates.reserve(row.size());
        for (NodeId j = 0; j < m.n2(); ++j)
            candidates.push_back({j, row[static_cast<std::size_t>(j)]});
    } else {
        const auto& row = m.sparse_row(i);
        candidates.assign(row.begin(), row.end());
    }
    auto better = [](const AlignmentMatrix::Entry& a, const AlignmentMatrix::Entry& b) {
        if (a.value != b.value) return a.value > b.value;
        return a.col < b.col;
    };
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take),
                      candidates.end(), better);
    std::vector<NodeId> cols;
    cols.reserve(take);
    for (std::size_t t = 0; t < take; ++t) cols.push_back(candidates[t].col);
    return cols;
}

// One-hot rows at the greedy argmax column, value 1.
inline AlignmentMatrix binarize(const AlignmentMatrix& m) {
    Mapping map = greedy_map(m);
    std::vector<AlignmentMatrix::SparseRow> rows(static_cast<std::size_t>(m.n1()));
    for (NodeId i = 0; i < m.n1(); ++i)
        rows[static_cast<std::size_t>(i)] = {{map[i], 1.0}};
    return AlignmentMatrix::sparse_from(m.n1(), m.n2(), std::move(rows));
}

// --- alignment file I/O ------------------------------------------------------
//
// Lines are either "i j" (binary, value 1) or "i j v" with v > 0.
// The writer always emits "i j v" with 17 significant digits so values
// round-trip losslessly.

inline AlignmentMatrix load_alignment(const std::string& path, NodeId n1, NodeId n2) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open alignment file: " + path);
    std::vector<std::vector<AlignmentMatrix::Entry>> rows(static_cast<std::size_t>(n1));
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::size_t start = line.find_first_not_of(" \t\r");
        if (start == std::string::npos || line[start] == '#') continue;
        std::istringstream ss(line);
        long long i, j;
        double v = 1.0;
        if (!(ss >> i >> j)) throw ParseError("expected 'i j' or 'i j v'", line_no);
        std::string tail;
        if (ss >> tail) {
            std::istringstream vs(tail);
            char leftover;
            if (!(vs >> v) || (vs >> leftover) || (ss >> tail))
                throw ParseError("expected 'i j' or 'i j v'", line_no);
        }
        if (i < 0 || i >= n1 || j < 0 || j >= n2)
            throw ParseError("alignment index out of bounds", line_no);
        if (v <= 0.0) throw ValueError("alignment value must be positive (line " +
                                       std::to_string(line_no) + ")");
        rows[static_cast<std::size_t>(i)].push_back({static_cast<NodeId>(j), v});
    }
    for (auto& row : rows) {
        std::sort(row.begin(), row.end(),
                  [](const auto& a, const auto& b) { return a.col < b.col; });
        for (std::size_t t = 1; t < row.size(); ++t)
            if (row[t].col == row[t - 1].col)
                throw ParseError("duplicate alignment entry for pair (" +
                                 std::to_string(&row - rows.data()) + ", " +
                                 std::to_string(row[t].col) + ")");
    }
    return AlignmentMatrix::sparse_from(n1, n2, std::move(rows));
}

inline void save_alignment(const AlignmentMatrix& m, std::ostream& out) {
    char buf[64];
    for (NodeId i = 0; i < m.n1(); ++i)
        m.for_each_in_row(i, [&](NodeId j, double v) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            out << i << ' ' << j << ' ' << buf << '\n';
        });
}

inline void save_alignment(const AlignmentMatrix& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open file for writing: " + path);
    save_alignment(m, out);
}

} // namespace refina
