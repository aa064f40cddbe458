#pragma once

#include "elda/rng.hpp"
#include "elda/types.hpp"

#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <vector>

namespace elda {

enum class GraphMode { exact, frozen };
enum class GraphStorage { dense, windowed };

using SparseMatrix = Eigen::SparseMatrix<Scalar>;

struct GraphBuildOptions {
    GraphStorage storage = GraphStorage::dense;
    bool with_exact_weights = false;
    // windowed storage: nodes form a grid_rows x grid_cols grid and only
    // pairs within a square window of this radius get a similarity entry
    Index window_radius = 8;
    Index grid_rows = 0;
    Index grid_cols = 0;
};

// Gaussian-kernel similarity graph over folded feature descriptors.
// W_ij = exp(-||g_i - g_j||^2 / bw^2), D = diag(row sums), L = D - W.
// When built with exact weights it also carries the gradient-side pair
// weights W~_ij = W_ij (1 - ||g_i - g_j||^2 / bw^2) and L~ = D~ - W~.
struct SimilarityGraph {
    Index n_nodes = 0;
    Scalar bandwidth = 1.0;
    GraphMode mode = GraphMode::frozen;
    GraphBuildOptions options;

    // dense storage
    Matrix W, L, Wt, Lt;
    // windowed storage
    SparseMatrix Ws, Ls, Wts, Lts;

    bool has_exact_weights() const { return options.with_exact_weights; }
};

// Median pairwise Euclidean distance between folded descriptors; the
// similarity bandwidth. Exact when the pair count fits the budget,
// otherwise estimated over a seeded uniform sample of pairs.
inline Scalar median_bandwidth(const FoldedFeatureMap& fg, Index sample_budget = 2'000'000) {
    const Index n = fg.folded_locations();
    if (n < 2) throw std::invalid_argument("median_bandwidth: need at least 2 nodes");

    std::vector<Scalar> d2;
    const Index n_pairs = n * (n - 1) / 2;
    if (n_pairs <= sample_budget) {
        d2.reserve(static_cast<std::size_t>(n_pairs));
        for (Index i = 0; i < n; ++i)
            for (Index j = i + 1; j < n; ++j)
                d2.push_back((fg.values.col(i) - fg.values.col(j)).squaredNorm());
    } else {
        rng::SplitMix64 g{0x9bdcafe1u};
        d2.reserve(static_cast<std::size_t>(sample_budget));
        for (Index k = 0; k < sample_budget; ++k) {
            const Index i = static_cast<Index>(g.next() % static_cast<std::uint64_t>(n));
            Index j = static_cast<Index>(g.next() % static_cast<std::uint64_t>(n - 1));
            if (j >= i) ++j;
            d2.push_back((fg.values.col(i) - fg.values.col(j)).squaredNorm());
        }
    }

    std::sort(d2.begin(), d2.end());
    const std::size_t half = d2.size() / 2;
    const Scalar med2 = (d2.size() % 2 == 1) ? d2[half]
                                             : 0.5 * (d2[half - 1] + d2[half]);
    const Scalar med = std::sqrt(med2);
    if (med <= 0.0)
        throw std::invalid_argument("median_bandwidth: all descriptors identical");
    return med;
}

namespace detail {

inline Matrix pairwise_sq_dists(const Matrix& g) {
    const Index n = g.cols();
    const Vector sq = g.colwise().squaredNorm();
    Matrix d2 = -2.0 * (g.transpose() * g);
    d2.colwise() += sq;
    d2.rowwise() += sq.transpose();
    d2 = 0.5 * (d2 + d2.transpose()).eval(); // exact symmetry
    return d2.cwiseMax(0.0);
}

} // namespace detail

inline SimilarityGraph build_graph(const FoldedFeatureMap& fg, Scalar bandwidth,
                                   const GraphBuildOptions& opts = {}) {
    if (bandwidth <= 0.0) throw std::invalid_argument("build_graph: bandwidth must be > 0");
    const Index n = fg.folded_locations();
    SimilarityGraph graph;
    graph.n_nodes = n;
    graph.bandwidth = bandwidth;
    graph.options = opts;
    const Scalar inv_bw2 = 1.0 / (bandwidth * bandwidth);

    if (opts.storage == GraphStorage::dense) {
        const Matrix d2 = detail::pairwise_sq_dists(fg.values);
        graph.W = (-d2 * inv_bw2).array().exp();
        graph.L = Matrix(graph.W.rowwise().sum().asDiagonal()) - graph.W;
        if (opts.with_exact_weights) {
            graph.Wt = graph.W.cwiseProduct(Matrix::Ones(n, n) - d2 * inv_bw2);
            graph.Lt = Matrix(graph.Wt.rowwise().sum().asDiagonal()) - graph.Wt;
        }
        return graph;
    }

    // windowed storage over the node grid
    if (opts.grid_rows <= 0 || opts.grid_cols <= 0 || opts.grid_rows * opts.grid_cols != n)
        throw std::invalid_argument("build_graph: windowed storage needs a matching node grid");
    const Index rad = opts.window_radius;
    std::vector<Eigen::Triplet<Scalar>> wtrip, wttrip;
    Vector deg = Vector::Zero(n), degt = Vector::Zero(n);
    for (Index i = 0; i < n; ++i) {
        const Index ri = i / opts.grid_cols, ci = i % opts.grid_cols;
        const Index r0 = std::max<Index>(0, ri - rad), r1 = std::min(opts.grid_rows - 1, ri + rad);
        const Index c0 = std::max<Index>(0, ci - rad), c1 = std::min(opts.grid_cols - 1, ci + rad);
        for (Index r = r0; r <= r1; ++r)
            for (Index c = c0; c <= c1; ++c) {
                const Index j = r * opts.grid_cols + c;
                const Scalar d2 = (fg.values.col(i) - fg.values.col(j)).squaredNorm();
                const Scalar w = std::exp(-d2 * inv_bw2);
                wtrip.emplace_back(i, j, w);
                deg[i] += w;
                if (opts.with_exact_weights) {
                    const Scalar wt = w * (1.0 - d2 * inv_bw2);
                    wttrip.emplace_back(i, j, wt);
                    degt[i] += wt;
                }
            }
    }
    graph.Ws.resize(n, n);
    graph.Ws.setFromTriplets(wtrip.begin(), wtrip.end());
    SparseMatrix dmat(n, n);
    std::vector<Eigen::Triplet<Scalar>> dtr;
    for (Index i = 0; i < n; ++i) dtr.emplace_back(i, i, deg[i]);
    dmat.setFromTriplets(dtr.begin(), dtr.end());
    graph.Ls = dmat - graph.Ws;
    if (opts.with_exact_weights) {
        graph.Wts.resize(n, n);
        graph.Wts.setFromTriplets(wttrip.begin(), wttrip.end());
        SparseMatrix dtmat(n, n);
        std::vector<Eigen::Triplet<Scalar>> dttr;
        for (Index i = 0; i < n; ++i) dttr.emplace_back(i, i, degt[i]);
        dtmat.setFromTriplets(dttr.begin(), dttr.end());
        graph.Lts = dtmat - graph.Wts;
    }
    return graph;
}

// Rebuilds the similarity weights at new features, keeping the bandwidth
// and layout of the carrier graph (the exact-gradient evaluation path).
inline SimilarityGraph rebuild_at(const SimilarityGraph& carrier, const FoldedFeatureMap& fg) {
    SimilarityGraph g = build_graph(fg, carrier.bandwidth, carrier.options);
    g.mode = carrier.mode;
    return g;
}

// g_hat * L (the quadratic-form route to the nonlocal value and gradient).
inline Matrix apply_laplacian(const SimilarityGraph& graph, const Matrix& g_hat) {
    if (g_hat.cols() != graph.n_nodes)
        throw std::invalid_argument("apply_laplacian: node count mismatch");
    if (graph.options.storage == GraphStorage::dense) return g_hat * graph.L;
    return g_hat * graph.Ls;
}

inline Matrix apply_exact_laplacian(const SimilarityGraph& graph, const Matrix& g_hat) {
    if (!graph.has_exact_weights())
        throw std::invalid_argument("apply_exact_laplacian: graph built without exact weights");
    if (g_hat.cols() != graph.n_nodes)
        throw std::invalid_argument("apply_exact_laplacian: node count mismatch");
    if (graph.options.storage == GraphStorage::dense) return g_hat * graph.Lt;
    return g_hat * graph.Lts;
}

} // namespace elda
