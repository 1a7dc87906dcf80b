#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "refina/alignment.hpp"
#include "refina/error.hpp"
#include "refina/graph.hpp"
#include "refina/mnc.hpp"
#include "refina/parallel.hpp"

namespace refina {

enum class RefineMode { Dense, Sparse };
enum class Normalization { SinglePass, Sinkhorn };

struct RefineConfig {
    int iterations = 100;           // K
    std::optional<double> epsilon;  // token match score; nullopt = auto from max(n1, n2)
    RefineMode mode = RefineMode::Dense;
    int alpha = 10;                 // entries updated per row in sparse mode
    Normalization normalization = Normalization::SinglePass;
    int sinkhorn_max_iters = 1000;
    double sinkhorn_tolerance = 1e-2;
    double early_stop_fraction = 0.0; // stop once changed-argmax fraction <= this; 0 disables
    int trace_every = 1;            // record every j-th iteration (final always recorded)
    double prune_threshold = 0.0;   // sparse: drop stored entries below this after normalizing; 0 = off
    int threads = 1;                // row-parallel workers; 0 = hardware concurrency

    void validate() const {
        if (iterations < 0) throw ParameterError("iteration count must be nonnegative");
        if (epsilon && *epsilon < 0.0) throw ParameterError("epsilon must be nonnegative");
        if (alpha < 1) throw ParameterError("alpha must be at least 1");
        if (sinkhorn_max_iters < 1) throw ParameterError("sinkhorn_max_iters must be positive");
        if (sinkhorn_tolerance <= 0.0) throw ParameterError("sinkhorn_tolerance must be positive");
        if (early_stop_fraction < 0.0 || early_stop_fraction > 1.0)
            throw ParameterError("early_stop_fraction must be in [0, 1]");
        if (trace_every < 1) throw ParameterError("trace_every must be positive");
        if (prune_threshold < 0.0) throw ParameterError("prune_threshold must be nonnegative");
    }
};

struct IterationRecord {
    int iteration;
    double avg_mnc;
    std::optional<double> accuracy; // present only when ground truth was supplied
    int changed_rows;               // rows whose greedy argmax changed since last record
    double wall_ms;                 // refinement work since last record; instrumentation excluded
};

struct IterationTrace {
    std::vector<IterationRecord> records;

    void write_csv(std::ostream& out) const {
        out << "iter,avg_mnc,accuracy,changed_rows,wall_ms\n";
        char buf[64];
        for (const auto& r : records) {
            std::snprintf(buf, sizeof(buf), "%.17g", r.avg_mnc);
            out << r.iteration << ',' << buf << ',';
            if (r.accuracy) {
                std::snprintf(buf, sizeof(buf), "%.17g", *r.accuracy);
                out << buf;
            }
            std::snprintf(buf, sizeof(buf), "%.17g", r.wall_ms);
            out << ',' << r.changed_rows << ',' << buf << '\n';
        }
    }
};

struct RefineResult {
    AlignmentMatrix matrix;
    IterationTrace trace;
};

// Token match score for a problem with n = max(n1, n2) nodes: the largest
// power of ten whose reciprocal keeps a row's token scores summing below 1,
// i.e. 10^-p for the smallest p with 10^p > n.
inline double auto_epsilon(NodeId n) {
    if (n < 1) throw ParameterError("auto_epsilon requires n >= 1");
    double threshold = 10.0; // 10^p for the smallest p with 10^p > n
    while (threshold <= static_cast<double>(n)) threshold *= 10.0;
    return 1.0 / threshold;
}

namespace detail {

// P = A1 * M * A2 for dense M, associated as (A1 M) A2 to match the
// sparse path's arithmetic order exactly.
//
// The lift T = A1 M runs k-major over column blocks: M streams
// sequentially and the active T slice stays cache-resident, which keeps
// the pass memory-bound at streaming bandwidth instead of thrashing on
// random row gathers. Per cell, contributions arrive in ascending k
// (lift) and ascending l (collapse) order for any thread count.
inline void dense_product(const Graph& g1, const Graph& g2, const std::vector<double>& m,
                          std::vector<double>& lift, std::vector<double>& out, int threads) {
    const NodeId n1 = g1.num_nodes();
    const NodeId n2 = g2.num_nodes();
    lift.assign(m.size(), 0.0);
    out.assign(m.size(), 0.0);
    if (n1 == 0 || n2 == 0) return;

    // Aim for a T slice of ~12 MB so it survives in L3 during the scatter.
    NodeId width = static_cast<NodeId>(
        std::max<std::size_t>(64, (12u << 20) / (sizeof(double) * static_cast<std::size_t>(n1))));
    width = std::min(width, n2);
    const int blocks = static_cast<int>((n2 + width - 1) / width);
    par::parallel_for(0, blocks, threads, [&](int b) {
        const NodeId c0 = static_cast<NodeId>(b) * width;
        const NodeId c1 = std::min<NodeId>(n2, c0 + width);
        for (NodeId k = 0; k < n1; ++k) {
            const double* src = m.data() + static_cast<std::size_t>(k) * n2;
            for (NodeId i : g1.neighbors(k)) {
                double* dst = lift.data() + static_cast<std::size_t>(i) * n2;
                for (NodeId c = c0; c < c1; ++c) dst[c] += src[c];
            }
        }
    });

    // Collapse in groups of rows so the adjacency stream of g2 is read
    // once per group instead of once per row.
    constexpr NodeId group = 8;
    const int groups = static_cast<int>((n1 + group - 1) / group);
    par::parallel_for(0, groups, threads, [&](int gidx) {
        const NodeId r0 = static_cast<NodeId>(gidx) * group;
        const NodeId r1 = std::min<NodeId>(n1, r0 + group);
        for (NodeId j = 0; j < n2; ++j) {
            const auto nbrs = g2.neighbors(j);
            for (NodeId i = r0; i < r1; ++i) {
                const double* t = lift.data() + static_cast<std::size_t>(i) * n2;
                double sum = 0.0;
                for (NodeId l : nbrs) sum += t[l];
                out[static_cast<std::size_t>(i) * n2 + static_cast<std::size_t>(j)] = sum;
            }
        }
    });
}

inline Mapping greedy_rows_dense(const std::vector<double>& m, NodeId n1, NodeId n2) {
    Mapping out;
    out.pi.resize(static_cast<std::size_t>(n1));
    for (NodeId i = 0; i < n1; ++i) {
        const double* row = m.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(n2);
        NodeId best = 0;
        double best_val = 0.0;
        bool any = false;
        for (NodeId j = 0; j < n2; ++j) {
            if (row[j] != 0.0 && (!any || row[j] > best_val)) {
                any = true;
                best_val = row[j];
                best = j;
            }
        }
        if (!any) out.zero_rows.push_back(i);
        out.pi[static_cast<std::size_t>(i)] = any ? best : 0;
    }
    return out;
}

inline Mapping greedy_rows_sparse(const std::vector<AlignmentMatrix::SparseRow>& rows) {
    Mapping out;
    out.pi.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        NodeId best = 0;
        double best_val = 0.0;
        bool any = false;
        for (const auto& [col, value] : rows[i]) {
            if (!any || value > best_val) {
                any = true;
                best_val = value;
                best = col;
            }
        }
        if (!any) out.zero_rows.push_back(static_cast<NodeId>(i));
        out.pi[i] = any ? best : 0;
    }
    return out;
}

// Row-then-column L1 normalization; zero-sum rows/columns are left alone.
inline void single_pass_dense(std::vector<double>& m, NodeId n1, NodeId n2, int threads) {
    par::parallel_for(0, n1, threads, [&](NodeId i) {
        double* row = m.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(n2);
        double sum = 0.0;
        for (NodeId j = 0; j < n2; ++j) sum += row[j];
        if (sum > 0.0)
            for (NodeId j = 0; j < n2; ++j) row[j] /= sum;
    });
    std::vector<double> col_sums(static_cast<std::size_t>(n2), 0.0);
    for (NodeId i = 0; i < n1; ++i) {
        const double* row = m.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(n2);
        for (NodeId j = 0; j < n2; ++j) col_sums[static_cast<std::size_t>(j)] += row[j];
    }
    par::parallel_for(0, n1, threads, [&](NodeId i) {
        double* row = m.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(n2);
        for (NodeId j = 0; j < n2; ++j)
            if (col_sums[static_cast<std::size_t>(j)] > 0.0)
                row[j] /= col_sums[static_cast<std::size_t>(j)];
    });
}

// Alternating row/column normalization until row sums are within tol of 1
// and column sums within tol of n1/n2 (1 when square), or max_iters passes.
// Zero rows/columns are skipped; their count is reported via *degenerate.
inline void sinkhorn_dense(std::vector<double>& m, NodeId n1, NodeId n2, int max_iters,
                           double tol, int threads, long* degenerate = nullptr) {
    const double col_target = static_cast<double>(n1) / static_cast<double>(n2);
    std::vector<double> col_sums(static_cast<std::size_t>(n2), 0.0);
    long skipped = 0;
    bool counted = false;
    for (int round = 0; round < max_iters; ++round) {
        long zero_lines = 0;
        par::parallel_for(0, n1, threads, [&](NodeId i) {
            double* row = m.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(n2);
            double sum = 0.0;
            for (NodeId j = 0; j < n2; ++j) sum += row[j];
            if (sum > 0.0)
                for (NodeId j = 0; j < n2; ++j) row[j] /= sum;
        });
        std::fill(col_sums.begin(), col_sums.end(), 0.0);
        for (NodeId i = 0; i < n1; ++i) {
            const double* row = m.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(n2);
            for (NodeId j = 0; j < n2; ++j) col_sums[static_cast<std::size_t>(j)] += row[j];
        }
        par::parallel_for(0, n1, threads, [&](NodeId i) {
            double* row = m.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(n2);
            for (NodeId j = 0; j < n2; ++j)
                if (col_sums[static_cast<std::size_t>(j)] > 0.0)
                    row[j] *= col_target / col_sums[static_cast<std::size_t>(j)];
        });
        // Convergence check on the sums the next pass would see.
        double max_dev = 0.0;
        std::fill(col_sums.begin(), col_sums.end(), 0.0);
        for (NodeId i = 0; i < n1; ++i) {
            const double* row = m.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(n2);
            double sum = 0.0;
            for (NodeId j = 0; j < n2; ++j) {
                sum += row[j];
                col_sums[static_cast<std::size_t>(j)] += row[j];
            }
            if (sum == 0.0)
                ++zero_lines;
            else
                max_dev = std::max(max_dev, std::abs(sum - 1.0));
        }
        for (NodeId j = 0; j < n2; ++j) {
            const double s = col_sums[static_cast<std::size_t>(j)];
            if (s == 0.0)
                ++zero_lines;
            else
                max_dev = std::max(max_dev, std::abs(s - col_target));
        }
        if (!counted) {
            skipped = zero_lines;
            counted = true;
        }
        if (max_dev < tol) break;
    }
    if (degenerate) *degenerate = skipped;
}

inline void single_pass_sparse(std::vector<AlignmentMatrix::SparseRow>& rows, NodeId n2,
                               int threads) {
    const int n1 = static_cast<int>(rows.size());
    par::parallel_for(0, n1, threads, [&](int i) {
        double sum = 0.0;
        for (const auto& e : rows[static_cast<std::size_t>(i)]) sum += e.value;
        if (sum > 0.0)
            for (auto& e : rows[static_cast<std::size_t>(i)]) e.value /= sum;
    });
    std::vector<double> col_sums(static_cast<std::size_t>(n2), 0.0);
    for (const auto& row : rows)
        for (const auto& e : row) col_sums[static_cast<std::size_t>(e.col)] += e.value;
    par::parallel_for(0, n1, threads, [&](int i) {
        for (auto& e : rows[static_cast<std::size_t>(i)])
            if (col_sums[static_cast<std::size_t>(e.col)] > 0.0)
                e.value /= col_sums[static_cast<std::size_t>(e.col)];
    });
}

inline void sinkhorn_sparse(std::vector<AlignmentMatrix::SparseRow>& rows, NodeId n1, NodeId n2,
                            int max_iters, double tol, int threads, long* degenerate = nullptr) {
    const double col_target = static_cast<double>(n1) / static_cast<double>(n2);
    std::vector<double> col_sums(static_cast<std::size_t>(n2), 0.0);
    long skipped = 0;
    bool counted = false;
    for (int round = 0; round < max_iters; ++round) {
        par::parallel_for(0, static_cast<int>(rows.size()), threads, [&](int i) {
            double sum = 0.0;
            for (const auto& e : rows[static_cast<std::size_t>(i)]) sum += e.value;
            if (sum > 0.0)
                for (auto& e : rows[static_cast<std::size_t>(i)]) e.value /= sum;
        });
        std::fill(col_sums.begin(), col_sums.end(), 0.0);
        for (const auto& row : rows)
            for (const auto& e : row) col_sums[static_cast<std::size_t>(e.col)] += e.value;
        par::parallel_for(0, static_cast<int>(rows.size()), threads, [&](int i) {
            for (auto& e : rows[static_cast<std::size_t>(i)])
                if (col_sums[static_cast<std::size_t>(e.col)] > 0.0)
                    e.value *= col_target / col_sums[static_cast<std::size_t>(e.col)];
        });
        long zero_lines = 0;
        double max_dev = 0.0;
        std::fill(col_sums.begin(), col_sums.end(), 0.0);
        std::vector<double> row_sums(rows.size(), 0.0);
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (const auto& e : rows[i]) {
                row_sums[i] += e.value;
                col_sums[static_cast<std::size_t>(e.col)] += e.value;
            }
        for (double s : row_sums) {
            if (s == 0.0)
                ++zero_lines;
            else
                max_dev = std::max(max_dev, std::abs(s - 1.0));
        }
        for (NodeId j = 0; j < n2; ++j) {
            const double s = col_sums[static_cast<std::size_t>(j)];
            if (s == 0.0)
                ++zero_lines;
            else
                max_dev = std::max(max_dev, std::abs(s - col_target));
        }
        if (!counted) {
            skipped = zero_lines;
            counted = true;
        }
        if (max_dev < tol) break;
    }
    if (degenerate) *degenerate = skipped;
}

} // namespace detail

// Elementwise product of m with the matched-neighbor count matrix A1*M*A2.
inline AlignmentMatrix mnc_update_dense(const Graph& g1, const Graph& g2,
                                        const AlignmentMatrix& m) {
    const NodeId n1 = g1.num_nodes();
    const NodeId n2 = g2.num_nodes();
    if (m.n1() != n1 || m.n2() != n2)
        throw DimensionError("alignment matrix does not match graph sizes");
    const AlignmentMatrix md = m.is_dense() ? m : m.to_dense();
    AlignmentMatrix out = AlignmentMatrix::dense(n1, n2, 0.0);
    std::vector<double> lift;
    detail::dense_product(g1, g2, md.dense_values(), lift, out.dense_values(), 1);
    const auto& src = md.dense_values();
    auto& dst = out.dense_values();
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] *= src[c];
    return out;
}

// Row-then-column L1 normalization (one pass of each).
inline AlignmentMatrix normalize_single_pass(const AlignmentMatrix& m) {
    AlignmentMatrix out = m;
    if (out.is_dense()) {
        detail::single_pass_dense(out.dense_values(), out.n1(), out.n2(), 1);
    } else {
        detail::single_pass_sparse(out.sparse_rows(), out.n2(), 1);
    }
    return out;
}

// Alternating row/column normalization toward a doubly stochastic matrix
// (row sums 1, column sums n1/n2). degenerate_lines, when given, receives
// the number of all-zero rows/columns that had to be skipped.
inline AlignmentMatrix normalize_sinkhorn(const AlignmentMatrix& m, int max_iters, double tol,
                                          long* degenerate_lines = nullptr) {
    if (max_iters < 1) throw ParameterError("sinkhorn max_iters must be positive");
    if (tol <= 0.0) throw ParameterError("sinkhorn tolerance must be positive");
    AlignmentMatrix out = m;
    if (out.is_dense()) {
        detail::sinkhorn_dense(out.dense_values(), out.n1(), out.n2(), max_iters, tol, 1,
                               degenerate_lines);
    } else {
        detail::sinkhorn_sparse(out.sparse_rows(), out.n1(), out.n2(), max_iters, tol, 1,
                                degenerate_lines);
    }
    return out;
}

namespace detail {

struct TraceKeeper {
    const Graph& g1;
    const Graph& g2;
    const Permutation* truth;
    const RefineConfig& cfg;
    Mapping prev_map;
    IterationTrace trace;
    double pending_ms = 0.0;

    TraceKeeper(const Graph& g1_, const Graph& g2_, const Permutation* truth_,
                const RefineConfig& cfg_, Mapping initial_map)
        : g1(g1_), g2(g2_), truth(truth_), cfg(cfg_), prev_map(std::move(initial_map)) {}

    bool should_record(int k) const {
        return k % cfg.trace_every == 0 || k == cfg.iterations;
    }

    // Returns the fraction of rows whose argmax changed (for early stop).
    double record(int k, Mapping map) {
        int changed = 0;
        for (NodeId i = 0; i < map.size(); ++i)
            if (map[i] != prev_map[i]) ++changed;
        IterationRecord rec;
        rec.iteration = k;
        rec.avg_mnc = average_mnc(g1, g2, map);
        if (truth) rec.accuracy = mapping_accuracy(map, *truth);
        rec.changed_rows = changed;
        rec.wall_ms = pending_ms;
        pending_ms = 0.0;
        trace.records.push_back(rec);
        prev_map = std::move(map);
        return static_cast<double>(changed) / static_cast<double>(prev_map.size());
    }
};

} // namespace detail

// Dense refinement: K iterations of
//   M <- normalize(M o (A1 M A2) + eps)
// where eps is added to every entry and normalize is single-pass or
// Sinkhorn per the config. Returns the final matrix and per-iteration trace.
inline RefineResult refine_dense(const Graph& g1, const Graph& g2, const AlignmentMatrix& m0,
                                 const RefineConfig& cfg, const Permutation* truth = nullptr) {
    cfg.validate();
    if (cfg.mode != RefineMode::Dense)
        throw ParameterError("refine_dense requires cfg.mode = dense");
    const NodeId n1 = g1.num_nodes();
    const NodeId n2 = g2.num_nodes();
    if (m0.n1() != n1 || m0.n2() != n2)
        throw DimensionError("alignment matrix does not match graph sizes");
    if (n1 < 1 || n2 < 1) throw DimensionError("refinement requires nonempty graphs");
    if (truth && truth->size() != n1)
        throw DimensionError("ground truth length does not match g1");

    AlignmentMatrix cur = m0.is_dense() ? m0 : m0.to_dense();
    if (cfg.iterations == 0) return {std::move(cur), {}};
    const double eps = cfg.epsilon ? *cfg.epsilon : auto_epsilon(std::max(n1, n2));

    detail::TraceKeeper keeper(g1, g2, truth, cfg,
                               detail::greedy_rows_dense(cur.dense_values(), n1, n2));
    std::vector<double> next(cur.dense_values().size());
    std::vector<double> lift(cur.dense_values().size());
    const int threads = cfg.threads;

    for (int k = 1; k <= cfg.iterations; ++k) {
        const auto t0 = std::chrono::steady_clock::now();
        auto& curv = cur.dense_values();
        detail::dense_product(g1, g2, curv, lift, next, threads);
        par::parallel_for(0, n1, threads, [&](NodeId i) {
            const double* src = curv.data() + static_cast<std::size_t>(i) * n2;
            double* dst = next.data() + static_cast<std::size_t>(i) * n2;
            for (NodeId j = 0; j < n2; ++j) dst[j] = src[j] * dst[j] + eps;
        });
        if (cfg.normalization == Normalization::SinglePass) {
            detail::single_pass_dense(next, n1, n2, threads);
        } else {
            detail::sinkhorn_dense(next, n1, n2, cfg.sinkhorn_max_iters, cfg.sinkhorn_tolerance,
                                   threads);
        }
        std::swap(curv, next);
        keeper.pending_ms +=
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();

        if (keeper.should_record(k)) {
            const double changed_fraction =
                keeper.record(k, detail::greedy_rows_dense(cur.dense_values(), n1, n2));
            if (cfg.early_stop_fraction > 0.0 && changed_fraction <= cfg.early_stop_fraction)
                break;
        }
    }
    return {std::move(cur), std::move(keeper.trace)};
}

// Sparse refinement: per iteration the update matrix U = top-alpha(A1 M A2)
// keeps the alpha largest product entries per row (ties to the lowest
// column). On U's support M <- M o U + eps, reading missing entries of M
// as 0 so newly selected pairs receive exactly eps; entries outside the
// support carry over unchanged. Stored entries are then normalized.
inline RefineResult refine_sparse(const Graph& g1, const Graph& g2, const AlignmentMatrix& m0,
                                  const RefineConfig& cfg, const Permutation* truth = nullptr) {
    cfg.validate();
    if (cfg.mode != RefineMode::Sparse)
        throw ParameterError("refine_sparse requires cfg.mode = sparse");
    const NodeId n1 = g1.num_nodes();
    const NodeId n2 = g2.num_nodes();
    if (m0.n1() != n1 || m0.n2() != n2)
        throw DimensionError("alignment matrix does not match graph sizes");
    if (n1 < 1 || n2 < 1) throw DimensionError("refinement requires nonempty graphs");
    if (truth && truth->size() != n1)
        throw DimensionError("ground truth length does not match g1");

    AlignmentMatrix cur = m0.is_dense() ? m0.to_sparse() : m0;
    if (cfg.iterations == 0) return {std::move(cur), {}};
    const double eps = cfg.epsilon ? *cfg.epsilon : auto_epsilon(std::max(n1, n2));
    const int alpha = cfg.alpha;
    const int threads = cfg.threads;

    detail::TraceKeeper keeper(g1, g2, truth, cfg,
                               detail::greedy_rows_sparse(cur.sparse_rows()));
    using Entry = AlignmentMatrix::Entry;
    std::vector<AlignmentMatrix::SparseRow> update(static_cast<std::size_t>(n1));

    struct Scratch {
        std::vector<double> lifted, prod;
        std::vector<NodeId> lifted_touched, prod_touched;
        std::vector<Entry> candidates;
    };

    for (int k = 1; k <= cfg.iterations; ++k) {
        const auto t0 = std::chrono::steady_clock::now();
        auto& rows = cur.sparse_rows();

        // Phase 1: U = top-alpha rows of A1 * M * A2, computed from the
        // pre-update rows only.
        const int nthreads = std::max(1, threads == 0
                                             ? static_cast<int>(std::thread::hardware_concurrency())
                                             : threads);
        std::vector<Scratch> scratch(static_cast<std::size_t>(nthreads));
        const int chunk = (n1 + nthreads - 1) / nthreads;
        par::parallel_for(0, nthreads, nthreads, [&](int t) {
            Scratch& s = scratch[static_cast<std::size_t>(t)];
            s.lifted.assign(static_cast<std::size_t>(n2), 0.0);
            s.prod.assign(static_cast<std::size_t>(n2), 0.0);
            const NodeId lo = static_cast<NodeId>(t) * chunk;
            const NodeId hi = std::min<NodeId>(n1, lo + chunk);
            for (NodeId i = lo; i < hi; ++i) {
                s.lifted_touched.clear();
                s.prod_touched.clear();
                for (NodeId nb : g1.neighbors(i))
                    for (const auto& [col, value] : rows[static_cast<std::size_t>(nb)]) {
                        if (s.lifted[static_cast<std::size_t>(col)] == 0.0)
                            s.lifted_touched.push_back(col);
                        s.lifted[static_cast<std::size_t>(col)] += value;
                    }
                // Ascending scatter order keeps sums bit-identical across
                // thread counts.
                std::sort(s.lifted_touched.begin(), s.lifted_touched.end());
                for (NodeId l : s.lifted_touched) {
                    const double v = s.lifted[static_cast<std::size_t>(l)];
                    s.lifted[static_cast<std::size_t>(l)] = 0.0;
                    for (NodeId j : g2.neighbors(l)) {
                        if (s.prod[static_cast<std::size_t>(j)] == 0.0)
                            s.prod_touched.push_back(j);
                        s.prod[static_cast<std::size_t>(j)] += v;
                    }
                }
                s.candidates.clear();
                std::sort(s.prod_touched.begin(), s.prod_touched.end());
                for (NodeId j : s.prod_touched) {
                    s.candidates.push_back({j, s.prod[static_cast<std::size_t>(j)]});
                    s.prod[static_cast<std::size_t>(j)] = 0.0;
                }
                auto better = [](const Entry& a, const Entry& b) {
                    if (a.value != b.value) return a.value > b.value;
                    return a.col < b.col;
                };
                const std::size_t take =
                    std::min<std::size_t>(static_cast<std::size_t>(alpha), s.candidates.size());
                std::partial_sort(s.candidates.begin(),
                                  s.candidates.begin() + static_cast<std::ptrdiff_t>(take),
                                  s.candidates.end(), better);
                auto& urow = update[static_cast<std::size_t>(i)];
                urow.assign(s.candidates.begin(),
                            s.candidates.begin() + static_cast<std::ptrdiff_t>(take));
                std::sort(urow.begin(), urow.end(),
                          [](const Entry& a, const Entry& b) { return a.col < b.col; });
            }
        });

        // Phase 2: merge the update into each row.
        par::parallel_for(0, n1, threads, [&](NodeId i) {
            const auto& urow = update[static_cast<std::size_t>(i)];
            if (urow.empty()) return; // all-zero update row: leave M row unchanged
            auto& row = rows[static_cast<std::size_t>(i)];
            AlignmentMatrix::SparseRow merged;
            merged.reserve(row.size() + urow.size());
            std::size_t a = 0, b = 0;
            while (a < row.size() || b < urow.size()) {
                if (b == urow.size() || (a < row.size() && row[a].col < urow[b].col)) {
                    merged.push_back(row[a]); // outside support: carry over
                    ++a;
                } else if (a == row.size() || urow[b].col < row[a].col) {
                    const double v = eps; // newly selected pair: 0 * u + eps
                    if (v > 0.0) merged.push_back({urow[b].col, v});
                    ++b;
                } else {
                    const double v = row[a].value * urow[b].value + eps;
                    if (v > 0.0) merged.push_back({row[a].col, v});
                    ++a;
                    ++b;
                }
            }
            row = std::move(merged);
        });

        if (cfg.normalization == Normalization::SinglePass) {
            detail::single_pass_sparse(rows, n2, threads);
        } else {
            detail::sinkhorn_sparse(rows, n1, n2, cfg.sinkhorn_max_iters, cfg.sinkhorn_tolerance,
                                    threads);
        }
        if (cfg.prune_threshold > 0.0) {
            par::parallel_for(0, n1, threads, [&](NodeId i) {
                auto& row = rows[static_cast<std::size_t>(i)];
                std::erase_if(row, [&](const Entry& e) { return e.value < cfg.prune_threshold; });
            });
        }
        keeper.pending_ms +=
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();

        if (keeper.should_record(k)) {
            const double changed_fraction =
                keeper.record(k, detail::greedy_rows_sparse(cur.sparse_rows()));
            if (cfg.early_stop_fraction > 0.0 && changed_fraction <= cfg.early_stop_fraction)
                break;
        }
    }
    return {std::move(cur), std::move(keeper.trace)};
}

// Dispatch on cfg.mode.
inline RefineResult refine(const Graph& g1, const Graph& g2, const AlignmentMatrix& m0,
                           const RefineConfig& cfg, const Permutation* truth = nullptr) {
    return cfg.mode == RefineMode::Dense ? refine_dense(g1, g2, m0, cfg, truth)
                                         : refine_sparse(g1, g2, m0, cfg, truth);
}

} // namespace refina
