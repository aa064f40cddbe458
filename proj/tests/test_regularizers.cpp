#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "elda/graph.hpp"
#include "elda/regularizers.hpp"
#include "elda/rng.hpp"
#include "elda/verify.hpp"

#include <cmath>

using namespace elda;

TEST_CASE("sparsity_value: branches and knot continuity") {
    FeatureMap zero(3, 7);
    CHECK(sparsity_value(zero, 1e-3) == 0.0);

    // single location, g = (3,4), eps = 1: ||g|| = 5 > eps, value 5 - 1/2
    FeatureMap f(2, 1);
    f.values << 3.0, 4.0;
    CHECK(sparsity_value(f, 1.0) == doctest::Approx(4.5).epsilon(1e-15));

    // ||g|| = eps: both branches give eps/2
    const double eps = 0.37;
    CHECK(smoothed_norm_loc(eps, eps) == doctest::Approx(eps / 2.0).epsilon(1e-15));
    CHECK(smoothed_norm_loc(std::nextafter(eps, 1.0), eps) ==
          doctest::Approx(eps / 2.0).epsilon(1e-12));

    CHECK_THROWS(sparsity_value(f, 0.0));
    CHECK_THROWS(sparsity_value(f, -1.0));

    Image x(8, 8, 1.0);
    CHECK_THROWS(sparsity_grad(x, tv_bank(), 0.0));

    // node-count mismatch between features and graph
    FoldedFeatureMap fg;
    fg.fold_rate = 1;
    fg.values = rng::gaussian_matrix(2, 6, 5);
    const SimilarityGraph g = build_graph(fg, 1.0);
    FoldedFeatureMap other;
    other.fold_rate = 1;
    other.values = rng::gaussian_matrix(2, 5, 6);
    CHECK_THROWS(nonlocal_value(other, g));
    CHECK_THROWS(nonlocal_value_pairwise(other, g));
}

TEST_CASE("sparsity_grad: zero image, finite differences, eps independence") {
    const FilterBank fb = tv_bank();
    const Index n = 12;

    Image zero(n, n, 1.0);
    CHECK(sparsity_grad(zero, fb, 1e-3).values.norm() == 0.0);

    // finite differences of sparsity_value(apply_g(x))
    Image x(n, n, 1.0);
    x.values = 0.2 * rng::gaussian_vector(n * n, 3);
    const double eps = 1e-2;
    const Vector grad = sparsity_grad(x, fb, eps).values;
    auto value_at = [&](const Vector& v) {
        Image xi(n, n, 1.0);
        xi.values = v;
        return sparsity_value(apply_g(xi, fb), eps);
    };
    const Vector fd = central_diff_grad(value_at, x.values, 1e-7);
    CHECK((fd - grad).norm() / grad.norm() <= 1e-5);

    // when every column norm exceeds eps the gradient does not depend on eps
    Image strong(n, n, 1.0);
    strong.values = 10.0 * rng::gaussian_vector(n * n, 5);
    const FeatureMap f = apply_g(strong, fb);
    double min_norm = 1e300;
    for (Index i = 0; i < f.locations(); ++i)
        min_norm = std::min(min_norm, f.values.col(i).norm());
    REQUIRE(min_norm > 1e-4);
    const Vector g1 = sparsity_grad(strong, fb, 1e-6).values;
    const Vector g2 = sparsity_grad(strong, fb, 1e-5).values;
    CHECK((g1.array() == g2.array()).all());
}

TEST_CASE("median_bandwidth: small cases and degeneracy") {
    // two nodes at distance 2
    FoldedFeatureMap two;
    two.fold_rate = 1;
    two.values = Matrix::Zero(1, 2);
    two.values(0, 1) = 2.0;
    CHECK(median_bandwidth(two) == doctest::Approx(2.0));

    // collinear nodes at 0, 1, 3: distances {1, 2, 3}, median 2
    FoldedFeatureMap three;
    three.fold_rate = 1;
    three.values = Matrix::Zero(1, 3);
    three.values(0, 1) = 1.0;
    three.values(0, 2) = 3.0;
    CHECK(median_bandwidth(three) == doctest::Approx(2.0));

    // identical descriptors are degenerate
    FoldedFeatureMap same;
    same.fold_rate = 1;
    same.values = Matrix::Ones(2, 5);
    CHECK_THROWS(median_bandwidth(same));

    // sampled estimate stays deterministic and positive
    FoldedFeatureMap big;
    big.fold_rate = 1;
    big.values = rng::gaussian_matrix(3, 200, 17);
    const double exact = median_bandwidth(big);
    const double sampled1 = median_bandwidth(big, 500);
    const double sampled2 = median_bandwidth(big, 500);
    CHECK(sampled1 == sampled2);
    CHECK(sampled1 > 0.0);
    CHECK(std::abs(sampled1 - exact) / exact < 0.2);
}

TEST_CASE("build_graph: similarity values and structure") {
    FoldedFeatureMap fg;
    fg.fold_rate = 1;
    fg.values = Matrix::Zero(2, 3);
    fg.values(0, 1) = 1.0;  // node 1 at distance 1 from node 0
    fg.values(0, 2) = 10.0; // node 2 far away
    const double bw = 1.0;
    GraphBuildOptions opts;
    opts.with_exact_weights = true;
    const SimilarityGraph g = build_graph(fg, bw, opts);

    CHECK(g.W(0, 0) == 1.0);                                    // identical descriptors
    CHECK(g.W(0, 1) == doctest::Approx(std::exp(-1.0)));        // dist = bw
    CHECK(g.Wt(0, 1) == doctest::Approx(0.0).epsilon(1e-300));  // sign-change point
    CHECK(g.W(0, 1) == g.W(1, 0));

    // L rows sum to zero
    for (Index i = 0; i < 3; ++i) CHECK(std::abs(g.L.row(i).sum()) <= 1e-14);

    CHECK_THROWS(build_graph(fg, 0.0));
    CHECK_THROWS(build_graph(fg, -1.0));
}

TEST_CASE("nonlocal_value: hand cases and dual-route identity") {
    // constant features give zero
    FoldedFeatureMap constant;
    constant.fold_rate = 1;
    constant.values = Matrix::Ones(3, 4);
    const SimilarityGraph cg = build_graph(constant, 1.0);
    CHECK(nonlocal_value(constant, cg) == doctest::Approx(0.0).epsilon(1e-300));

    // two nodes, 1-D descriptors 0 and t: value = W12 * t^2
    FoldedFeatureMap pair;
    pair.fold_rate = 1;
    pair.values = Matrix::Zero(1, 2);
    const double t = 0.8;
    pair.values(0, 1) = t;
    const double bw = 0.5;
    const SimilarityGraph pg = build_graph(pair, bw);
    const double w12 = std::exp(-t * t / (bw * bw));
    CHECK(nonlocal_value_pairwise(pair, pg) == doctest::Approx(w12 * t * t).epsilon(1e-14));
    CHECK(nonlocal_value(pair, pg) == doctest::Approx(w12 * t * t).epsilon(1e-12));

    // random 10-node instance: pairwise equals trace within 1e-10
    FoldedFeatureMap rnd;
    rnd.fold_rate = 2;
    rnd.values = rng::gaussian_matrix(6, 10, 23);
    const SimilarityGraph rg = build_graph(rnd, median_bandwidth(rnd));
    const double pw = nonlocal_value_pairwise(rnd, rg);
    const double tr = nonlocal_value(rnd, rg);
    CHECK(std::abs(pw - tr) <= 1e-10 * std::abs(pw));
}

TEST_CASE("nonlocal_grad: constant image, frozen and exact finite differences") {
    RegularizerConfig cfg;
    cfg.lambda = 1.0;
    cfg.kappa = 4;

    // identity kernels keep descriptors equal on a constant image
    FilterBank ident;
    {
        LayerWeights w(1, 1);
        w.at(0, 0)(1, 1) = 1.0;
        ident.layers.push_back(std::move(w));
    }
    Image flat(8, 8, 1.0);
    flat.values.setConstant(0.7);
    {
        // bandwidth cannot come from identical descriptors; use a fixed one
        const FeatureMap f = apply_g(flat, ident);
        const FoldedFeatureMap fg = fold(f, cfg.kappa);
        GraphBuildOptions opts;
        opts.with_exact_weights = true;
        SimilarityGraph g = build_graph(fg, 1.0, opts);
        g.mode = GraphMode::frozen;
        CHECK(nonlocal_grad(flat, ident, cfg, g).values.norm() <= 1e-12);
        g.mode = GraphMode::exact;
        CHECK(nonlocal_grad(flat, ident, cfg, g).values.norm() <= 1e-12);
    }

    const FilterBank fb = tv_bank();
    const Index n = 16;
    const Image anchor = random_image(n, 1.0, 31);

    // frozen mode: finite differences of tr(g(x) L g(x)^T) with L fixed
    {
        RegularizerConfig fcfg = cfg;
        fcfg.graph_mode = GraphMode::frozen;
        const SimilarityGraph graph = prepare_graph(anchor, fb, fcfg);
        Image x = random_image(n, 1.0, 33);
        const Vector grad = nonlocal_grad(x, fb, fcfg, graph).values;
        auto value_at = [&](const Vector& v) {
            Image xi(n, n, 1.0);
            xi.values = v;
            return nonlocal_value(fold(apply_g(xi, fb), fcfg.kappa), graph);
        };
        const Vector fd = central_diff_grad(value_at, x.values, 1e-6);
        CHECK((fd - grad).norm() / grad.norm() <= 1e-5);
    }

    // exact mode: finite differences of the full r_bar including W(x)
    {
        RegularizerConfig ecfg = cfg;
        ecfg.graph_mode = GraphMode::exact;
        const SimilarityGraph graph = prepare_graph(anchor, fb, ecfg);
        Image x = random_image(n, 1.0, 35);
        const Vector grad = nonlocal_grad(x, fb, ecfg, graph).values;
        auto value_at = [&](const Vector& v) {
            Image xi(n, n, 1.0);
            xi.values = v;
            const FoldedFeatureMap fg = fold(apply_g(xi, fb), ecfg.kappa);
            return nonlocal_value(fg, rebuild_at(graph, fg));
        };
        const Vector fd = central_diff_grad(value_at, x.values, 1e-6);
        CHECK((fd - grad).norm() / grad.norm() <= 1e-4);

        // exact-mode gradient requires the exact-gradient weights
        SimilarityGraph no_exact = build_graph(fold(apply_g(anchor, fb), ecfg.kappa),
                                               graph.bandwidth);
        no_exact.mode = GraphMode::exact;
        CHECK_THROWS(nonlocal_grad(x, fb, ecfg, no_exact));
    }
}

TEST_CASE("windowed storage: agrees with dense when the window covers the grid") {
    const FilterBank fb = tv_bank();
    const Index n = 12;
    const Image anchor = random_image(n, 1.0, 41);
    const FeatureMap f = apply_g(anchor, fb);
    const FoldedFeatureMap fg = fold(f, 4);
    const double bw = median_bandwidth(fg);

    GraphBuildOptions wopts;
    wopts.storage = GraphStorage::windowed;
    wopts.window_radius = 64; // covers everything
    wopts.grid_rows = n;
    wopts.grid_cols = n / 4;
    const SimilarityGraph wg = build_graph(fg, bw, wopts);
    const SimilarityGraph dg = build_graph(fg, bw);

    CHECK(std::abs(nonlocal_value(fg, wg) - nonlocal_value(fg, dg)) <=
          1e-12 * std::abs(nonlocal_value(fg, dg)));
    CHECK(std::abs(nonlocal_value_pairwise(fg, wg) - nonlocal_value_pairwise(fg, dg)) <=
          1e-12 * std::abs(nonlocal_value_pairwise(fg, dg)));

    // narrow window: still symmetric, PSD, zero row sums
    GraphBuildOptions nopts = wopts;
    nopts.window_radius = 1;
    SimilarityGraph ng = build_graph(fg, bw, nopts);
    const Matrix ldense = Matrix(ng.Ls);
    CHECK((ldense - ldense.transpose()).cwiseAbs().maxCoeff() <= 1e-14);
    for (Index i = 0; i < ng.n_nodes; ++i) CHECK(std::abs(ldense.row(i).sum()) <= 1e-13);
    for (int t = 0; t < 50; ++t) {
        const Vector v = rng::gaussian_vector(ng.n_nodes, 800 + static_cast<std::uint64_t>(t));
        CHECK(v.dot(ldense * v) >= -1e-10 * v.squaredNorm());
    }

    // frozen-mode gradient through the sparse Laplacian checks against
    // finite differences of the windowed quadratic form
    {
        ng.mode = GraphMode::frozen;
        RegularizerConfig cfg;
        cfg.lambda = 1.0;
        cfg.kappa = 4;
        Image x = random_image(n, 1.0, 43);
        const Vector grad = nonlocal_grad(x, fb, cfg, ng).values;
        auto value_at = [&](const Vector& v) {
            Image xi(n, n, 1.0);
            xi.values = v;
            return nonlocal_value(fold(apply_g(xi, fb), cfg.kappa), ng);
        };
        const Vector fd = central_diff_grad(value_at, x.values, 1e-6);
        CHECK((fd - grad).norm() / grad.norm() <= 1e-5);
    }
}

TEST_CASE("prepare_graph: automatic storage policy by node count") {
    const FilterBank fb = tv_bank();
    RegularizerConfig cfg;
    cfg.lambda = 0.1;
    cfg.kappa = 1;

    // 32x32 with kappa 1: 1024 nodes, stays dense
    const SimilarityGraph small = prepare_graph(random_image(32, 1.0, 61), fb, cfg);
    CHECK(small.options.storage == GraphStorage::dense);

    // 80x80 with kappa 1: 6400 nodes, switches to windowed
    const SimilarityGraph big = prepare_graph(random_image(80, 1.0, 62), fb, cfg);
    CHECK(big.options.storage == GraphStorage::windowed);
    CHECK(big.Ws.nonZeros() > 0);

    // an explicit request wins over the policy
    cfg.storage_auto = false;
    cfg.graph_storage = GraphStorage::dense;
    const SimilarityGraph forced = prepare_graph(random_image(80, 1.0, 62), fb, cfg);
    CHECK(forced.options.storage == GraphStorage::dense);
}

TEST_CASE("phi_eps: smoothing-state overload matches the plain-eps form") {
    const auto geo = micro_geometry();
    const Index n = 16;
    const Scalar px = geo.pixel_size_for(n);
    const FilterBank fb = tv_bank();
    RegularizerConfig cfg;
    cfg.lambda = 0.1;
    const Image anchor = random_image(n, px, 71);
    const SimilarityGraph graph = prepare_graph(anchor, fb, cfg);
    LinearFidelity fid{geo, forward_project(random_image(n, px, 72), geo)};
    const Image x = random_image(n, px, 73);

    SmoothingState state;
    state.eps = 2.5e-4;
    state.m = n * n;
    const PhiEval a = phi_eps(x, fid, fb, cfg, state, &graph);
    const PhiEval b = phi_eps(x, fid, fb, cfg, state.eps, &graph);
    CHECK(a.value == b.value);
    CHECK((a.grad.values.array() == b.grad.values.array()).all());
    CHECK(phi_eps_value(x, fid, fb, cfg, state, &graph) == b.value);

    state.eps = -1.0;
    CHECK_THROWS(phi_eps(x, fid, fb, cfg, state, &graph));
}

TEST_CASE("laplacian: positive semidefinite on random graphs") {
    for (int t = 0; t < 10; ++t) {
        FoldedFeatureMap fg;
        fg.fold_rate = 2;
        fg.values = rng::gaussian_matrix(8, 30, 900 + static_cast<std::uint64_t>(t));
        const SimilarityGraph g = build_graph(fg, median_bandwidth(fg));
        for (int v = 0; v < 100; ++v) {
            const Vector z = rng::gaussian_vector(30, 1000 + static_cast<std::uint64_t>(v));
            CHECK(z.dot(g.L * z) >= -1e-10 * z.squaredNorm());
        }
    }
}

TEST_CASE("phi_eps: degenerate regularizer reduces to the fidelity") {
    const auto geo = micro_geometry();
    const Index n = 16;
    const Scalar px = geo.pixel_size_for(n);
    Sinogram b(geo.n_views, geo.n_detectors);
    b.values = rng::gaussian_vector(b.size(), 51);
    const LinearFidelity fid{geo, b};

    FilterBank zerofb;
    zerofb.layers.push_back(LayerWeights(2, 1)); // all-zero kernels
    RegularizerConfig cfg;
    cfg.lambda = 0.0;

    Image x(n, n, px);
    x.values = rng::gaussian_vector(n * n, 53);
    const PhiEval pe = phi_eps(x, fid, zerofb, cfg, 1e-3, nullptr);
    CHECK(pe.value == doctest::Approx(fidelity_value(x, fid)).epsilon(1e-15));
    CHECK((pe.grad.values - grad_fidelity(x, fid).values).norm() == 0.0);
}

TEST_CASE("phi_eps: full finite-difference check, tv preset, frozen graph") {
    const auto geo = micro_geometry();
    const Index n = 16;
    const Scalar px = geo.pixel_size_for(n);
    const FilterBank fb = tv_bank();
    RegularizerConfig cfg;
    cfg.lambda = 0.1;
    cfg.kappa = 4;

    const Image anchor = random_image(n, px, 61);
    const SimilarityGraph graph = prepare_graph(anchor, fb, cfg);
    LinearFidelity fid{geo, forward_project(random_image(n, px, 62), geo)};

    Image x = random_image(n, px, 63);
    const PhiEval pe = phi_eps(x, fid, fb, cfg, 1e-3, &graph);
    auto value_at = [&](const Vector& v) {
        Image xi(n, n, px);
        xi.values = v;
        return phi_eps_value(xi, fid, fb, cfg, 1e-3, &graph);
    };
    const Vector fd = central_diff_grad(value_at, x.values, 1e-6);
    CHECK((fd - pe.grad.values).norm() / pe.grad.values.norm() <= 1e-5);

    // value-only path agrees bitwise with the value from the joint path
    CHECK(phi_eps_value(x, fid, fb, cfg, 1e-3, &graph) == pe.value);
}

TEST_CASE("smoothing sandwich: r_eps <= r <= r_eps + m eps / 2") {
    const FilterBank fb = tv_bank();
    for (int t = 0; t < 50; ++t) {
        const Image x = random_image(16, 1.0, 2000 + static_cast<std::uint64_t>(t));
        const FeatureMap f = apply_g(x, fb);
        const double m = static_cast<double>(f.locations());
        const double r_true = sparsity_value_true(f);
        for (double eps : {1e-4, 1e-3, 1e-2}) {
            const double r_eps = sparsity_value(f, eps);
            CHECK(r_eps <= r_true + 1e-12);
            CHECK(r_true <= r_eps + 0.5 * m * eps + 1e-12);
        }
    }
}

TEST_CASE("smoothing: per-location envelope monotone under eps reduction") {
    rng::SplitMix64 g{4242};
    for (int t = 0; t < 2000; ++t) {
        const double norm = std::pow(10.0, 4.0 * rng::uniform01(g) - 3.0);
        const double eps = std::pow(10.0, -1.0 - 4.0 * rng::uniform01(g));
        const double gamma = 0.1 + 0.8 * rng::uniform01(g);
        const double lhs = smoothed_norm_loc(norm, gamma * eps) + 0.5 * gamma * eps;
        const double rhs = smoothed_norm_loc(norm, eps) + 0.5 * eps;
        CHECK(lhs <= rhs + 1e-15);
    }
}

TEST_CASE("grad_reg_eps: inexact mode substitutes the stored transposes") {
    const Index n = 12;
    FilterBank fb = xavier_bank(2, 4, 71);
    set_exact_transposes(fb);
    RegularizerConfig cfg;
    cfg.lambda = 0.1;
    cfg.kappa = 4;
    const Image anchor = random_image(n, 1.0, 73);
    const SimilarityGraph graph = prepare_graph(anchor, fb, cfg);
    const Image x = random_image(n, 1.0, 75);

    const Vector exact = grad_reg_eps(x, fb, cfg, 1e-3, &graph, GradMode::exact).values;
    const Vector inexact = grad_reg_eps(x, fb, cfg, 1e-3, &graph, GradMode::inexact).values;
    CHECK((exact.array() == inexact.array()).all()); // w~ == w^T here

    set_perturbed_transposes(fb, 1.0, 77);
    const Vector perturbed = grad_reg_eps(x, fb, cfg, 1e-3, &graph, GradMode::inexact).values;
    CHECK((perturbed - exact).norm() > 0.0);
}
