#pragma once

#include "elda/features.hpp"
#include "elda/geometry.hpp"
#include "elda/graph.hpp"
#include "elda/projector.hpp"
#include "elda/types.hpp"

namespace elda {

// Balance and layout of the two regularizer terms. With storage_auto set,
// graph storage resolves to dense up to 4096 nodes and windowed beyond.
struct RegularizerConfig {
    Scalar lambda = 0.1; // weight of the nonlocal term
    Index kappa = 4;     // fold rate
    GraphMode graph_mode = GraphMode::frozen;
    GraphStorage graph_storage = GraphStorage::dense;
    bool storage_auto = true;
    Index window_radius = 8;
};

inline constexpr Index kDenseGraphNodeLimit = 4096;

inline void validate(const RegularizerConfig& cfg) {
    if (cfg.lambda < 0.0) throw std::invalid_argument("regularizer: lambda must be >= 0");
    if (cfg.kappa < 1) throw std::invalid_argument("regularizer: kappa must be >= 1");
}

// Smoothing schedule state: the current radius plus the constants that
// drive its reduction.
struct SmoothingState {
    Scalar eps = 1e-3;
    Scalar eps0 = 1e-3;
    Scalar gamma = 0.5;
    Scalar sigma_red = 1.0;
    Index m = 0; // location count, the m in the m*eps/2 envelope

    void check() const {
        if (eps <= 0.0 || eps0 <= 0.0) throw std::invalid_argument("smoothing: eps must be > 0");
        if (gamma <= 0.0 || gamma >= 1.0)
            throw std::invalid_argument("smoothing: gamma must lie in (0,1)");
    }
};

// --- sparsity term ---------------------------------------------------------

// One location of the smoothed l2,1 norm: ||g||^2/(2 eps) when ||g|| <= eps,
// ||g|| - eps/2 beyond.
inline Scalar smoothed_norm_loc(Scalar norm, Scalar eps) {
    if (norm <= eps) return norm * norm / (2.0 * eps);
    return norm - 0.5 * eps;
}

inline Scalar sparsity_value(const FeatureMap& f, Scalar eps) {
    if (eps <= 0.0) throw std::invalid_argument("sparsity_value: eps must be > 0");
    Scalar acc = 0.0;
    for (Index i = 0; i < f.locations(); ++i)
        acc += smoothed_norm_loc(f.values.col(i).norm(), eps);
    return acc;
}

// The unsmoothed l2,1 norm sum ||g_i||.
inline Scalar sparsity_value_true(const FeatureMap& f) {
    Scalar acc = 0.0;
    for (Index i = 0; i < f.locations(); ++i) acc += f.values.col(i).norm();
    return acc;
}

namespace detail {

// Column scaling of the smoothed-norm gradient: g_i/eps inside the ball,
// g_i/||g_i|| outside.
inline FeatureMap sparsity_cotangent(const FeatureMap& f, Scalar eps) {
    FeatureMap s(f.channels(), f.locations());
    for (Index i = 0; i < f.locations(); ++i) {
        const Scalar norm = f.values.col(i).norm();
        const Scalar scale = (norm <= eps) ? 1.0 / eps : 1.0 / norm;
        s.values.col(i) = f.values.col(i) * scale;
    }
    return s;
}

} // namespace detail

inline Image sparsity_grad(const Image& x, const FilterBank& fb, Scalar eps) {
    if (eps <= 0.0) throw std::invalid_argument("sparsity_grad: eps must be > 0");
    const ForwardPass fp = forward_g(x, fb);
    const FeatureMap cot = detail::sparsity_cotangent(fp.features, eps);
    return jacobian_T_apply(fp.state, fb, cot, GradMode::exact, x.pixel_size);
}

// --- nonlocal term ----------------------------------------------------------

// tr(g_hat L g_hat^T); the production route to the nonlocal value.
inline Scalar nonlocal_value(const FoldedFeatureMap& fg, const SimilarityGraph& graph) {
    if (fg.folded_locations() != graph.n_nodes)
        throw std::invalid_argument("nonlocal_value: node count mismatch");
    return apply_laplacian(graph, fg.values).cwiseProduct(fg.values).sum();
}

// sum over unordered pairs i<j of W_ij ||g_i - g_j||^2; the reference route,
// equal to the trace form.
inline Scalar nonlocal_value_pairwise(const FoldedFeatureMap& fg, const SimilarityGraph& graph) {
    if (fg.folded_locations() != graph.n_nodes)
        throw std::invalid_argument("nonlocal_value_pairwise: node count mismatch");
    Scalar acc = 0.0;
    if (graph.options.storage == GraphStorage::dense) {
        for (Index i = 0; i < graph.n_nodes; ++i)
            for (Index j = i + 1; j < graph.n_nodes; ++j)
                acc += graph.W(i, j) * (fg.values.col(i) - fg.values.col(j)).squaredNorm();
        return acc;
    }
    for (Index o = 0; o < graph.Ws.outerSize(); ++o)
        for (SparseMatrix::InnerIterator it(graph.Ws, o); it; ++it)
            if (it.row() < it.col())
                acc += it.value() *
                       (fg.values.col(it.row()) - fg.values.col(it.col())).squaredNorm();
    return acc;
}

namespace detail {

// Cotangent of the nonlocal term in unfolded feature layout:
// 2 * unfold(g_hat Lx), with Lx = L~ rebuilt at the current features in
// exact mode and the frozen L otherwise.
inline FeatureMap nonlocal_cotangent(const FoldedFeatureMap& fg, const SimilarityGraph& graph) {
    Matrix m;
    if (graph.mode == GraphMode::exact) {
        if (!graph.has_exact_weights())
            throw std::invalid_argument("nonlocal_grad: exact mode requires exact-gradient weights");
        const SimilarityGraph at_x = rebuild_at(graph, fg);
        m = apply_exact_laplacian(at_x, fg.values);
    } else {
        m = apply_laplacian(graph, fg.values);
    }
    FoldedFeatureMap cot;
    cot.fold_rate = fg.fold_rate;
    cot.values = 2.0 * m;
    return unfold_adjoint(cot);
}

} // namespace detail

inline Image nonlocal_grad(const Image& x, const FilterBank& fb, const RegularizerConfig& cfg,
                           const SimilarityGraph& graph) {
    const ForwardPass fp = forward_g(x, fb);
    const FoldedFeatureMap fg = fold(fp.features, cfg.kappa);
    const FeatureMap cot = detail::nonlocal_cotangent(fg, graph);
    return jacobian_T_apply(fp.state, fb, cot, GradMode::exact, x.pixel_size);
}

// --- assembled smoothed objective -------------------------------------------

struct PhiEval {
    Scalar value = 0.0;
    Image grad;   // grad f + grad r_hat_eps + lambda grad r_bar
    Image grad_f; // the fidelity component alone
};

namespace detail {

// Shared assembly for value-only and value+gradient evaluation. One
// forward pass of g feeds both regularizer terms; the value accumulation
// is identical in both modes so traces replay bit-exactly.
inline PhiEval phi_eps_impl(const Image& x, const LinearFidelity& fid, const FilterBank& fb,
                            const RegularizerConfig& cfg, Scalar eps,
                            const SimilarityGraph* graph, bool want_grad) {
    if (eps <= 0.0) throw std::invalid_argument("phi_eps: eps must be > 0");
    PhiEval out;

    Sinogram residual = forward_project(x, fid.geometry);
    residual.values -= fid.data.values;
    out.value = 0.5 * residual.values.squaredNorm();

    const ForwardPass fp = forward_g(x, fb);
    out.value += sparsity_value(fp.features, eps);

    FeatureMap cot;
    bool have_cot = false;
    if (want_grad) {
        cot = sparsity_cotangent(fp.features, eps);
        have_cot = true;
    }

    if (cfg.lambda > 0.0) {
        if (graph == nullptr)
            throw std::invalid_argument("phi_eps: lambda > 0 requires a similarity graph");
        const FoldedFeatureMap fg = fold(fp.features, cfg.kappa);
        if (graph->mode == GraphMode::exact) {
            const SimilarityGraph at_x = rebuild_at(*graph, fg);
            out.value += cfg.lambda * nonlocal_value(fg, at_x);
            if (want_grad) {
                FoldedFeatureMap c;
                c.fold_rate = fg.fold_rate;
                c.values = 2.0 * apply_exact_laplacian(at_x, fg.values);
                cot.values += cfg.lambda * unfold_adjoint(c).values;
            }
        } else {
            out.value += cfg.lambda * nonlocal_value(fg, *graph);
            if (want_grad) {
                FoldedFeatureMap c;
                c.fold_rate = fg.fold_rate;
                c.values = 2.0 * apply_laplacian(*graph, fg.values);
                cot.values += cfg.lambda * unfold_adjoint(c).values;
            }
        }
    }

    if (want_grad) {
        out.grad_f = back_project(residual, fid.geometry, x.width);
        out.grad = out.grad_f;
        if (have_cot) {
            const Image reg_grad =
                jacobian_T_apply(fp.state, fb, cot, GradMode::exact, x.pixel_size);
            out.grad.values += reg_grad.values;
        }
    }
    return out;
}

} // namespace detail

// phi_eps = f + r_eps with r_eps = r_hat_eps + lambda * r_bar; returns the
// value and the exact gradient grad f + grad r_hat_eps + lambda grad r_bar.
inline PhiEval phi_eps(const Image& x, const LinearFidelity& fid, const FilterBank& fb,
                       const RegularizerConfig& cfg, Scalar eps,
                       const SimilarityGraph* graph) {
    return detail::phi_eps_impl(x, fid, fb, cfg, eps, graph, true);
}

inline Scalar phi_eps_value(const Image& x, const LinearFidelity& fid, const FilterBank& fb,
                            const RegularizerConfig& cfg, Scalar eps,
                            const SimilarityGraph* graph) {
    return detail::phi_eps_impl(x, fid, fb, cfg, eps, graph, false).value;
}

// The unsmoothed objective f + ||g(x)||_{2,1} + lambda r_bar(x); used for
// method comparisons where the smoothing radius differs between runs.
inline Scalar phi_true_value(const Image& x, const LinearFidelity& fid, const FilterBank& fb,
                             const RegularizerConfig& cfg, const SimilarityGraph* graph) {
    Sinogram residual = forward_project(x, fid.geometry);
    residual.values -= fid.data.values;
    Scalar value = 0.5 * residual.values.squaredNorm();
    const ForwardPass fp = forward_g(x, fb);
    value += sparsity_value_true(fp.features);
    if (cfg.lambda > 0.0) {
        if (graph == nullptr)
            throw std::invalid_argument("phi_true_value: lambda > 0 requires a similarity graph");
        const FoldedFeatureMap fg = fold(fp.features, cfg.kappa);
        if (graph->mode == GraphMode::exact) {
            const SimilarityGraph at_x = rebuild_at(*graph, fg);
            value += cfg.lambda * nonlocal_value(fg, at_x);
        } else {
            value += cfg.lambda * nonlocal_value(fg, *graph);
        }
    }
    return value;
}

// grad r_eps(x) = grad r_hat_eps + lambda grad r_bar, with the backward
// pass run in the requested mode ("possibly inexact" for the u-candidate).
inline Image grad_reg_eps(const Image& x, const FilterBank& fb, const RegularizerConfig& cfg,
                          Scalar eps, const SimilarityGraph* graph, GradMode mode) {
    if (eps <= 0.0) throw std::invalid_argument("grad_reg_eps: eps must be > 0");
    const ForwardPass fp = forward_g(x, fb);
    FeatureMap cot = detail::sparsity_cotangent(fp.features, eps);
    if (cfg.lambda > 0.0) {
        if (graph == nullptr)
            throw std::invalid_argument("grad_reg_eps: lambda > 0 requires a similarity graph");
        const FoldedFeatureMap fg = fold(fp.features, cfg.kappa);
        cot.values += cfg.lambda * detail::nonlocal_cotangent(fg, *graph).values;
    }
    return jacobian_T_apply(fp.state, fb, cot, mode, x.pixel_size);
}

// Builds the graph used by a reconstruction: features of the anchor image
// (normally x0), fold, median bandwidth, then the similarity weights. In
// exact mode the graph carries the exact-gradient weights and is rebuilt
// at every evaluation point; in frozen mode it is fixed here.
inline SimilarityGraph prepare_graph(const Image& anchor, const FilterBank& fb,
                                     const RegularizerConfig& cfg) {
    const FeatureMap f = apply_g(anchor, fb);
    const FoldedFeatureMap fg = fold(f, cfg.kappa);
    GraphBuildOptions opts;
    opts.storage = cfg.graph_storage;
    if (cfg.storage_auto)
        opts.storage = fg.folded_locations() <= kDenseGraphNodeLimit ? GraphStorage::dense
                                                                     : GraphStorage::windowed;
    opts.with_exact_weights = (cfg.graph_mode == GraphMode::exact);
    opts.window_radius = cfg.window_radius;
    if (opts.storage == GraphStorage::windowed) {
        if (anchor.width % cfg.kappa != 0)
            throw std::invalid_argument("prepare_graph: windowed storage needs kappa | width");
        opts.grid_rows = anchor.height;
        opts.grid_cols = anchor.width / cfg.kappa;
    }
    SimilarityGraph g = build_graph(fg, median_bandwidth(fg), opts);
    g.mode = cfg.graph_mode;
    return g;
}

// Assembled objective driven by a smoothing-schedule state.
inline PhiEval phi_eps(const Image& x, const LinearFidelity& fid, const FilterBank& fb,
                       const RegularizerConfig& cfg, const SmoothingState& state,
                       const SimilarityGraph* graph) {
    state.check();
    return phi_eps(x, fid, fb, cfg, state.eps, graph);
}

inline Scalar phi_eps_value(const Image& x, const LinearFidelity& fid, const FilterBank& fb,
                            const RegularizerConfig& cfg, const SmoothingState& state,
                            const SimilarityGraph* graph) {
    state.check();
    return phi_eps_value(x, fid, fb, cfg, state.eps, graph);
}

} // namespace elda
