#pragma once

#include "elda/fbp.hpp"
#include "elda/metrics.hpp"
#include "elda/noise.hpp"
#include "elda/objective.hpp"
#include "elda/phantom.hpp"
#include "elda/projector.hpp"
#include "elda/regularizers.hpp"
#include "elda/solver.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace elda {

struct PropertyResult {
    std::string name;
    bool pass = false;
    Scalar measured = 0.0;
    Scalar bound = 0.0;
    std::string note;
};

// Central finite differences of a scalar field; the independent gradient
// oracle used by the gradient suites.
template <class F>
Vector central_diff_grad(F&& f, const Vector& x, Scalar h = 1e-6) {
    Vector g(x.size());
    Vector xp = x;
    for (Index i = 0; i < x.size(); ++i) {
        const Scalar orig = xp[i];
        xp[i] = orig + h;
        const Scalar fp = f(xp);
        xp[i] = orig - h;
        const Scalar fm = f(xp);
        xp[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

// Small geometry for finite-difference sweeps, where every pixel costs two
// projector passes per probe.
inline FanBeamGeometry micro_geometry() {
    return FanBeamGeometry::with_uniform_views(250.0, 250.0, 32, 11.5, 24, 170.0);
}

// Phantom -> attenuation scaling -> clean sinogram -> noisy sinogram -> FBP.
struct SimInstance {
    FanBeamGeometry geo;
    Image reference; // phantom in attenuation units
    Sinogram clean;
    Sinogram noisy;
    Image x0;
};

inline SimInstance make_sim_instance(const FanBeamGeometry& geo, Index image_n, Scalar mu_scale,
                                     Scalar dose_i0, std::uint64_t seed,
                                     FbpFilter filter = FbpFilter::ramlak) {
    SimInstance s;
    s.geo = geo;
    s.reference = shepp_logan(image_n, geo.pixel_size_for(image_n));
    s.reference.values *= mu_scale;
    s.clean = forward_project(s.reference, geo);
    DoseModel dose;
    dose.incident_photons = dose_i0;
    dose.seed = seed;
    s.noisy = simulate_noisy_sinogram(s.clean, dose);
    s.x0 = fbp(s.noisy, geo, image_n, filter);
    return s;
}

inline Image random_image(Index n, Scalar pixel_size, std::uint64_t seed, Scalar scale = 0.1) {
    Image im(n, n, pixel_size);
    im.values = scale * rng::gaussian_vector(n * n, seed);
    return im;
}

// --- adjoint suite -------------------------------------------------------------

inline std::vector<PropertyResult> run_adjoint_suite() {
    std::vector<PropertyResult> out;
    const auto geo = FanBeamGeometry::desk_preset();
    const Index n = 32;
    const Scalar px = geo.pixel_size_for(n);

    Scalar worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        Image x(n, n, px);
        x.values = rng::gaussian_vector(n * n, 1000 + static_cast<std::uint64_t>(trial));
        Sinogram y(geo.n_views, geo.n_detectors);
        y.values = rng::gaussian_vector(y.size(), 5000 + static_cast<std::uint64_t>(trial));
        const Sinogram ax = forward_project(x, geo);
        const Image aty = back_project(y, geo, n);
        const Scalar lhs = std::abs(ax.values.dot(y.values) - x.values.dot(aty.values));
        const Scalar scale = ax.values.norm() * y.values.norm();
        worst = std::max(worst, lhs / scale);
    }
    out.push_back({"adjoint_identity_100_pairs", worst <= 1e-10, worst, 1e-10, ""});

    // linearity of the forward map
    {
        Image x = random_image(n, px, 11);
        Image y = random_image(n, px, 12);
        Image comb(n, n, px);
        comb.values = 2.5 * x.values - 1.25 * y.values;
        const Sinogram lhs = forward_project(comb, geo);
        const Sinogram ax = forward_project(x, geo);
        const Sinogram ay = forward_project(y, geo);
        const Scalar err = (lhs.values - 2.5 * ax.values + 1.25 * ay.values).norm() /
                           lhs.values.norm();
        out.push_back({"forward_linearity", err <= 1e-12, err, 1e-12, ""});
    }

    // Lipschitz constant of grad f equals ||A||^2 within power-iteration slack
    {
        const Scalar lmax = estimate_normal_op_norm(geo, n, 100);
        LinearFidelity fid{geo, forward_project(random_image(n, px, 13), geo)};
        Scalar worst_ratio = 0.0;
        for (int t = 0; t < 10; ++t) {
            Image a = random_image(n, px, 100 + static_cast<std::uint64_t>(t));
            Image b = random_image(n, px, 200 + static_cast<std::uint64_t>(t));
            const Vector d = grad_fidelity(a, fid).values - grad_fidelity(b, fid).values;
            worst_ratio = std::max(worst_ratio, d.norm() / (a.values - b.values).norm());
        }
        const Scalar bound = lmax * (1.0 + 1e-6);
        out.push_back({"grad_f_lipschitz_vs_opnorm", worst_ratio <= bound, worst_ratio, bound,
                       "power-iteration estimate"});
    }
    return out;
}

// --- gradient suite -------------------------------------------------------------

namespace detail {

inline PropertyResult fd_check_phi(const std::string& name, const FilterBank& fb,
                                   GraphMode mode, int points, Scalar tol,
                                   std::uint64_t seed_base) {
    const auto geo = micro_geometry();
    const Index n = 16;
    const Scalar px = geo.pixel_size_for(n);
    const Image anchor = random_image(n, px, seed_base);
    LinearFidelity fid{geo, forward_project(random_image(n, px, seed_base + 1), geo)};
    RegularizerConfig cfg;
    cfg.lambda = 0.1;
    cfg.kappa = 4;
    cfg.graph_mode = mode;
    const SimilarityGraph graph = prepare_graph(anchor, fb, cfg);
    const Scalar eps = 1e-3;

    Scalar worst = 0.0;
    for (int t = 0; t < points; ++t) {
        Image x = random_image(n, px, seed_base + 10 + static_cast<std::uint64_t>(t));
        const PhiEval pe = phi_eps(x, fid, fb, cfg, eps, &graph);
        auto value_at = [&](const Vector& v) {
            Image xi(n, n, px);
            xi.values = v;
            return phi_eps_value(xi, fid, fb, cfg, eps, &graph);
        };
        const Vector fd = central_diff_grad(value_at, x.values);
        worst = std::max(worst, (fd - pe.grad.values).norm() / pe.grad.values.norm());
    }
    return {name, worst <= tol, worst, tol, ""};
}

} // namespace detail

inline std::vector<PropertyResult> run_gradient_suite() {
    std::vector<PropertyResult> out;

    // sigma' against finite differences of sigma
    {
        const Scalar delta = 1e-3;
        rng::SplitMix64 g{77};
        Scalar worst = 0.0;
        for (int t = 0; t < 100; ++t) {
            const Scalar x = 4.0 * delta * (rng::uniform01(g) - 0.5);
            const Scalar h = 1e-9;
            const Scalar fd = (sigma(x + h, delta) - sigma(x - h, delta)) / (2.0 * h);
            const Scalar sp = sigma_prime(x, delta);
            worst = std::max(worst, std::abs(fd - sp) / std::max(1e-12, std::abs(sp)));
        }
        out.push_back({"sigma_prime_fd", worst <= 1e-6, worst, 1e-6, ""});
    }

    // directional derivative of g against the Jacobian transpose
    {
        const Index n = 12;
        const FilterBank fb = xavier_bank(2, 6, 5);
        Scalar worst = 0.0;
        for (int t = 0; t < 5; ++t) {
            Image x = random_image(n, 1.0, 300 + static_cast<std::uint64_t>(t));
            FeatureMap v(fb.feature_channels(), n * n);
            v.values = rng::gaussian_matrix(fb.feature_channels(), n * n,
                                            400 + static_cast<std::uint64_t>(t));
            Image u_img = random_image(n, 1.0, 500 + static_cast<std::uint64_t>(t));
            const Image jt = jacobian_T_apply(x, fb, v);
            const Scalar lhs = jt.values.dot(u_img.values);
            const Scalar h = 1e-6;
            Image xp(n, n, 1.0), xm(n, n, 1.0);
            xp.values = x.values + h * u_img.values;
            xm.values = x.values - h * u_img.values;
            const Scalar fp = (apply_g(xp, fb).values.cwiseProduct(v.values)).sum();
            const Scalar fm = (apply_g(xm, fb).values.cwiseProduct(v.values)).sum();
            const Scalar rhs = (fp - fm) / (2.0 * h);
            worst = std::max(worst, std::abs(lhs - rhs) / std::max(1e-12, std::abs(rhs)));
        }
        out.push_back({"jacobian_transpose_directional", worst <= 1e-5, worst, 1e-5, ""});
    }

    out.push_back(detail::fd_check_phi("phi_grad_fd_tv_frozen", tv_bank(), GraphMode::frozen, 5,
                                       1e-5, 9000));
    out.push_back(detail::fd_check_phi("phi_grad_fd_random_frozen", xavier_bank(2, 8, 21),
                                       GraphMode::frozen, 5, 1e-5, 9100));
    out.push_back(detail::fd_check_phi("phi_grad_fd_tv_exact_graph", tv_bank(), GraphMode::exact,
                                       5, 1e-4, 9200));
    return out;
}

// --- descent suite --------------------------------------------------------------

inline SolverConfig desk_solver_config(const FanBeamGeometry& geo, Index image_n,
                                       int max_iters = 60) {
    SolverConfig cfg;
    cfg.max_iters = max_iters;
    cfg.alpha_schedule = {1.0 / estimate_normal_op_norm(geo, image_n)};
    return cfg;
}

inline std::vector<PropertyResult> run_descent_suite() {
    std::vector<PropertyResult> out;
    const auto geo = FanBeamGeometry::desk_preset();
    const Index n = 32;
    const SimInstance sim = make_sim_instance(geo, n, 0.1, 1e5, 7);

    RegularizerConfig rcfg;
    rcfg.lambda = 0.1;
    rcfg.kappa = 4;
    CTObjective obj = CTObjective::prepare({geo, sim.noisy}, tv_bank(), rcfg, sim.x0);
    const SolverConfig cfg = desk_solver_config(geo, n);
    const SolveResult res = run(obj, sim.x0.values, cfg);

    const auto mono = check_monotone_fixed_eps(res.trace);
    out.push_back({"descent_monotone_fixed_eps", mono.ok, 0.0, 0.0, mono.what});
    const auto per = check_per_step_decrease(res.trace, cfg);
    out.push_back({"descent_per_step_clauses", per.ok, 0.0, 0.0, per.what});
    const auto lyap = check_lyapunov(res.trace);
    out.push_back({"descent_lyapunov_envelope", lyap.ok, 0.0, 0.0, lyap.what});
    const auto traj = check_eps_trajectory(res.trace, cfg);
    out.push_back({"descent_eps_trajectory", traj.ok, 0.0, 0.0, traj.what});
    int max_bt = 0;
    for (const auto& r : res.trace.records) max_bt = std::max(max_bt, r.backtracks);
    out.push_back({"descent_backtrack_cap", max_bt <= cfg.max_backtracks,
                   static_cast<Scalar>(max_bt), static_cast<Scalar>(cfg.max_backtracks), ""});
    out.push_back({"descent_u_branch_ratio", true, res.trace.u_branch_ratio(), 0.0,
                   "diagnostic only, no asserted target"});
    return out;
}

// --- smoothing suite -------------------------------------------------------------

inline std::vector<PropertyResult> run_smoothing_suite() {
    std::vector<PropertyResult> out;

    // sandwich r_eps <= r <= r_eps + m eps / 2 on features of random images
    {
        const FilterBank fb = tv_bank();
        const Index n = 16;
        bool ok = true;
        Scalar worst_slack = 0.0;
        for (int t = 0; t < 50; ++t) {
            const Image x = random_image(n, 1.0, 7000 + static_cast<std::uint64_t>(t));
            const FeatureMap f = apply_g(x, fb);
            const Scalar m = static_cast<Scalar>(f.locations());
            const Scalar r_true = sparsity_value_true(f);
            for (Scalar eps : {1e-4, 1e-3, 1e-2}) {
                const Scalar r_eps = sparsity_value(f, eps);
                if (r_eps > r_true + 1e-12 || r_true > r_eps + 0.5 * m * eps + 1e-12) ok = false;
                worst_slack = std::max(worst_slack, r_eps - r_true);
            }
        }
        out.push_back({"smoothing_sandwich", ok, worst_slack, 1e-12, ""});
    }

    // per-location monotonicity of r_eps + eps/2 under eps reduction
    {
        rng::SplitMix64 g{31337};
        bool ok = true;
        for (int t = 0; t < 2000; ++t) {
            const Scalar norm = 0.01 * std::pow(10.0, 4.0 * rng::uniform01(g) - 2.0);
            const Scalar eps = std::pow(10.0, -1.0 - 4.0 * rng::uniform01(g));
            const Scalar gamma = 0.1 + 0.8 * rng::uniform01(g);
            const Scalar lhs = smoothed_norm_loc(norm, gamma * eps) + 0.5 * gamma * eps;
            const Scalar rhs = smoothed_norm_loc(norm, eps) + 0.5 * eps;
            if (lhs > rhs + 1e-15) ok = false;
        }
        out.push_back({"smoothing_per_location_monotone", ok, 0.0, 0.0, ""});
    }

    // Laplacian positive semidefiniteness
    {
        Scalar worst = std::numeric_limits<Scalar>::infinity();
        for (int t = 0; t < 10; ++t) {
            FoldedFeatureMap fg;
            fg.fold_rate = 4;
            fg.values = rng::gaussian_matrix(12, 40, 8000 + static_cast<std::uint64_t>(t));
            const SimilarityGraph graph = build_graph(fg, median_bandwidth(fg));
            for (int v = 0; v < 100; ++v) {
                const Vector z =
                    rng::gaussian_vector(graph.n_nodes, 9000 + static_cast<std::uint64_t>(v));
                worst = std::min(worst, z.dot(graph.L * z) / z.squaredNorm());
            }
        }
        out.push_back({"laplacian_psd", worst >= -1e-10, worst, -1e-10, "min Rayleigh quotient"});
    }

    // pairwise sum vs trace quadratic form
    {
        Scalar worst = 0.0;
        for (int t = 0; t < 30; ++t) {
            rng::SplitMix64 g{123 + static_cast<std::uint64_t>(t)};
            const Index nodes = 8 + static_cast<Index>(g.next() % 57);
            FoldedFeatureMap fg;
            fg.fold_rate = 2;
            fg.values = rng::gaussian_matrix(6, nodes, 700 + static_cast<std::uint64_t>(t));
            const SimilarityGraph graph = build_graph(fg, median_bandwidth(fg));
            const Scalar pw = nonlocal_value_pairwise(fg, graph);
            const Scalar tr = nonlocal_value(fg, graph);
            worst = std::max(worst, std::abs(pw - tr) / std::max(1e-300, std::abs(pw)));
        }
        out.push_back({"pairwise_trace_identity", worst <= 1e-10, worst, 1e-10, ""});
    }

    // empirical Lipschitz constant of the frozen-mode nonlocal gradient
    {
        const FilterBank fb = tv_bank();
        const Index n = 12;
        RegularizerConfig cfg;
        cfg.lambda = 1.0;
        cfg.kappa = 4;
        const Image anchor = random_image(n, 1.0, 4242);
        const SimilarityGraph graph = prepare_graph(anchor, fb, cfg);
        Scalar worst = 0.0;
        for (int t = 0; t < 20; ++t) {
            Image a = random_image(n, 1.0, 4300 + static_cast<std::uint64_t>(t));
            Image b(n, n, 1.0);
            b.values =
                a.values + 0.01 * rng::gaussian_vector(n * n, 4400 + static_cast<std::uint64_t>(t));
            const Vector da = nonlocal_grad(a, fb, cfg, graph).values;
            const Vector db = nonlocal_grad(b, fb, cfg, graph).values;
            worst = std::max(worst, (da - db).norm() / (a.values - b.values).norm());
        }
        out.push_back({"nonlocal_grad_empirical_lipschitz", std::isfinite(worst), worst, 0.0,
                       "empirical constant over sampled pairs in a ball"});
    }
    return out;
}

// --- noise suite -----------------------------------------------------------------

inline std::vector<PropertyResult> run_noise_suite() {
    std::vector<PropertyResult> out;

    // first and second moments of I at b = 0
    {
        const Scalar i0 = 1e6, sig2 = 10.0;
        const Index n = 1'000'000;
        DoseModel dose;
        dose.incident_photons = i0;
        dose.electronic_variance = sig2;
        dose.seed = 12345;
        Scalar sum = 0.0, sumsq = 0.0;
        for (Index i = 0; i < n; ++i) {
            auto g = rng::stream_at(dose.seed, static_cast<std::uint64_t>(i));
            const Scalar v = rng::poisson(g, i0) + std::sqrt(sig2) * rng::normal(g);
            sum += v;
            sumsq += v * v;
        }
        const Scalar mean = sum / static_cast<Scalar>(n);
        const Scalar var =
            (sumsq - static_cast<Scalar>(n) * mean * mean) / static_cast<Scalar>(n - 1);
        const Scalar tvar = i0 + sig2;
        const Scalar se_mean = std::sqrt(tvar / static_cast<Scalar>(n));
        const Scalar se_var = tvar * std::sqrt(2.0 / static_cast<Scalar>(n - 1));
        const Scalar mean_err = std::abs(mean - i0);
        const Scalar var_err = std::abs(var - tvar);
        out.push_back({"noise_mean_3se", mean_err <= 3.0 * se_mean, mean_err, 3.0 * se_mean, ""});
        out.push_back({"noise_variance_3se", var_err <= 3.0 * se_var, var_err, 3.0 * se_var, ""});
    }

    // determinism of the seeded simulator
    {
        Sinogram clean(4, 8);
        clean.values = Vector::LinSpaced(32, 0.0, 3.1);
        DoseModel dose;
        dose.incident_photons = 2.5e4;
        dose.seed = 99;
        const Sinogram a = simulate_noisy_sinogram(clean, dose);
        const Sinogram b = simulate_noisy_sinogram(clean, dose);
        const bool same = (a.values.array() == b.values.array()).all();
        out.push_back({"noise_seed_determinism", same, same ? 0.0 : 1.0, 0.0, ""});
    }

    // FBP quality is monotone in dose
    {
        const auto geo = FanBeamGeometry::desk_preset();
        const Index n = 64;
        Image ref = shepp_logan(n, geo.pixel_size_for(n));
        ref.values *= 0.1;
        const Sinogram clean = forward_project(ref, geo);
        const Scalar peak = ref.values.maxCoeff();
        Scalar prev = -1e30;
        bool ordered = true;
        for (Scalar i0 : {2.5e4, 5e4, 1e5, 1e6}) {
            DoseModel dose;
            dose.incident_photons = i0;
            dose.seed = 7;
            const Sinogram noisy = simulate_noisy_sinogram(clean, dose);
            const Scalar p = psnr(fbp(noisy, geo, n), ref, peak);
            if (p <= prev) ordered = false;
            prev = p;
        }
        out.push_back({"noise_dose_psnr_ordering", ordered, 0.0, 0.0,
                       "fbp psnr increasing over I0 in {2.5e4, 5e4, 1e5, 1e6}"});
    }
    return out;
}

inline std::vector<PropertyResult> run_suite(const std::string& name) {
    if (name == "adjoint") return run_adjoint_suite();
    if (name == "gradients") return run_gradient_suite();
    if (name == "descent") return run_descent_suite();
    if (name == "smoothing") return run_smoothing_suite();
    if (name == "noise") return run_noise_suite();
    throw std::invalid_argument("verify: unknown suite '" + name + "'");
}

} // namespace elda
