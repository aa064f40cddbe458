#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "elda/fbp.hpp"
#include "elda/metrics.hpp"
#include "elda/noise.hpp"
#include "elda/phantom.hpp"
#include "elda/projector.hpp"
#include "elda/rng.hpp"
#include "elda/verify.hpp"

#include <cmath>

using namespace elda;

namespace {

// Line-integral oracle: dense sampling of the segment between source and
// detector element, independent of the projector's traversal.
double sampled_line_integral(const Image& im, const FanBeamGeometry& geo, Index view, Index det,
                             int samples = 10000) {
    const auto s = detail::ray_source(geo, view);
    const auto e = detail::ray_endpoint(geo, view, det);
    const double len = std::hypot(e.x - s.x, e.y - s.y);
    const double half = (static_cast<double>(im.width) - 1.0) / 2.0;
    double acc = 0.0;
    for (int i = 0; i < samples; ++i) {
        const double t = (i + 0.5) / samples;
        const double x = s.x + t * (e.x - s.x);
        const double y = s.y + t * (e.y - s.y);
        const Index c = static_cast<Index>(std::lround(x / im.pixel_size + half));
        const Index r = static_cast<Index>(std::lround(half - y / im.pixel_size));
        if (r >= 0 && r < im.height && c >= 0 && c < im.width) acc += im.at(r, c);
    }
    return acc * len / samples;
}

// Dense system matrix built by projecting unit basis images.
Matrix dense_system_matrix(const FanBeamGeometry& geo, Index n) {
    const Scalar px = geo.pixel_size_for(n);
    Matrix a(geo.n_views * geo.n_detectors, n * n);
    for (Index j = 0; j < n * n; ++j) {
        Image e(n, n, px);
        e.values[j] = 1.0;
        a.col(j) = forward_project(e, geo).values;
    }
    return a;
}

} // namespace

TEST_CASE("forward_project: zero image gives zero sinogram") {
    const auto geo = FanBeamGeometry::desk_preset();
    const Image x(32, 32, geo.pixel_size_for(32));
    const Sinogram s = forward_project(x, geo);
    CHECK(s.values.norm() == 0.0);
}

TEST_CASE("forward_project: central ray through a unit center pixel") {
    // odd image size and odd detector count put a ray exactly through the
    // center pixel of the grid
    auto geo = FanBeamGeometry::with_uniform_views(250.0, 250.0, 31, 4.0, 8, 170.0);
    const Index n = 33;
    Image x(n, n, geo.pixel_size_for(n));
    x.at(16, 16) = 1.0;

    // exact chord by slab-clipping the ray against the pixel square
    auto exact_chord = [&](Index view, Index det) {
        const auto s = detail::ray_source(geo, view);
        const auto e = detail::ray_endpoint(geo, view, det);
        const double half = x.pixel_size / 2.0;
        double t0 = 0.0, t1 = 1.0;
        const double d[2] = {e.x - s.x, e.y - s.y};
        const double o[2] = {s.x, s.y};
        for (int ax = 0; ax < 2; ++ax) {
            if (d[ax] == 0.0) {
                if (o[ax] < -half || o[ax] > half) return 0.0;
                continue;
            }
            double ta = (-half - o[ax]) / d[ax];
            double tb = (half - o[ax]) / d[ax];
            if (ta > tb) std::swap(ta, tb);
            t0 = std::max(t0, ta);
            t1 = std::min(t1, tb);
        }
        if (t1 <= t0) return 0.0;
        return (t1 - t0) * std::hypot(d[0], d[1]);
    };

    const Sinogram s = forward_project(x, geo);
    // horizontal central ray: the chord is exactly one pixel width
    CHECK(s.at(0, 15) == doctest::Approx(x.pixel_size).epsilon(1e-12));
    CHECK(s.at(0, 15) == doctest::Approx(exact_chord(0, 15)).epsilon(1e-3));
    // 45-degree central ray: the chord is the pixel diagonal
    CHECK(s.at(1, 15) == doctest::Approx(exact_chord(1, 15)).epsilon(1e-3));
    // the dense-sampling oracle agrees with both at its own granularity
    CHECK(sampled_line_integral(x, geo, 0, 15) ==
          doctest::Approx(exact_chord(0, 15)).epsilon(2e-2));
    CHECK(sampled_line_integral(x, geo, 1, 15) ==
          doctest::Approx(exact_chord(1, 15)).epsilon(2e-2));
}

TEST_CASE("forward_project: uniform disk central chord") {
    const auto geo = FanBeamGeometry::desk_preset();
    const Index n = 128;
    Image disk(n, n, geo.pixel_size_for(n));
    const double radius = 50.0; // mm
    const double density = 0.3;
    const double half = (n - 1.0) / 2.0;
    for (Index r = 0; r < n; ++r)
        for (Index c = 0; c < n; ++c) {
            const double x = (c - half) * disk.pixel_size;
            const double y = (half - r) * disk.pixel_size;
            if (x * x + y * y <= radius * radius) disk.at(r, c) = density;
        }
    const Sinogram s = forward_project(disk, geo);
    const double analytic = 2.0 * radius * density;
    const Index mid = geo.n_detectors / 2;
    const double got = std::max(s.at(0, mid - 1), s.at(0, mid));
    CHECK(std::abs(got - analytic) / analytic < 0.01);
}

TEST_CASE("back_project: adjoint of forward_project") {
    const auto geo = FanBeamGeometry::desk_preset();
    const Index n = 32;
    const Scalar px = geo.pixel_size_for(n);

    const Sinogram zs(geo.n_views, geo.n_detectors);
    CHECK(back_project(zs, geo, n).values.norm() == 0.0);

    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        Image x(n, n, px);
        x.values = rng::gaussian_vector(n * n, 50 + static_cast<std::uint64_t>(trial));
        Sinogram y(geo.n_views, geo.n_detectors);
        y.values = rng::gaussian_vector(y.size(), 950 + static_cast<std::uint64_t>(trial));
        const Sinogram ax = forward_project(x, geo);
        const Image aty = back_project(y, geo, n);
        const double lhs = std::abs(ax.values.dot(y.values) - x.values.dot(aty.values));
        worst = std::max(worst, lhs / (ax.values.norm() * y.values.norm()));
    }
    CHECK(worst <= 1e-10);
}

TEST_CASE("back_project: single-ray impulse is supported near the ray") {
    const auto geo = micro_geometry();
    const Index n = 24;
    Sinogram s(geo.n_views, geo.n_detectors);
    const Index view = 5, det = 11;
    s.at(view, det) = 1.0;
    const Image bp = back_project(s, geo, n);

    // independent geometric oracle: every nonzero pixel center must lie
    // within 1.5 pixels of the ray
    const auto src = detail::ray_source(geo, view);
    const auto end = detail::ray_endpoint(geo, view, det);
    const double dx = end.x - src.x, dy = end.y - src.y;
    const double len2 = dx * dx + dy * dy;
    const double half = (n - 1.0) / 2.0;
    CHECK(bp.values.cwiseAbs().maxCoeff() > 0.0);
    for (Index r = 0; r < n; ++r)
        for (Index c = 0; c < n; ++c) {
            if (bp.at(r, c) == 0.0) continue;
            const double x = (c - half) * bp.pixel_size;
            const double y = (half - r) * bp.pixel_size;
            const double t = ((x - src.x) * dx + (y - src.y) * dy) / len2;
            const double px_ = src.x + t * dx, py = src.y + t * dy;
            const double dist = std::hypot(x - px_, y - py);
            CHECK(dist <= bp.pixel_size * 1.5);
        }
}

TEST_CASE("fidelity: value and gradient against dense system matrix") {
    const auto geo = micro_geometry();
    const Index n = 16;
    const Scalar px = geo.pixel_size_for(n);
    const Matrix a = dense_system_matrix(geo, n);

    Image x(n, n, px);
    x.values = rng::gaussian_vector(n * n, 3);
    Sinogram b(geo.n_views, geo.n_detectors);
    b.values = rng::gaussian_vector(b.size(), 4);
    const LinearFidelity fid{geo, b};

    const double dense_value = 0.5 * (a * x.values - b.values).squaredNorm();
    CHECK(fidelity_value(x, fid) == doctest::Approx(dense_value).epsilon(1e-12));

    const Vector dense_grad = a.transpose() * (a * x.values - b.values);
    const Vector got = grad_fidelity(x, fid).values;
    CHECK((got - dense_grad).norm() <= 1e-10 * dense_grad.norm());
}

TEST_CASE("fidelity: zero residual, zero data, finite differences") {
    const auto geo = micro_geometry();
    const Index n = 16;
    const Scalar px = geo.pixel_size_for(n);

    Image x(n, n, px);
    x.values = 0.1 * rng::gaussian_vector(n * n, 5);

    // b = Ax makes the gradient vanish
    const LinearFidelity exact{geo, forward_project(x, geo)};
    CHECK(fidelity_value(x, exact) == doctest::Approx(0.0));
    CHECK(grad_fidelity(x, exact).values.norm() == 0.0);

    // b = 0 gives gradient A^T A x
    Sinogram zero_b(geo.n_views, geo.n_detectors);
    const LinearFidelity zf{geo, zero_b};
    const Image ata_x = back_project(forward_project(x, geo), geo, n);
    CHECK((grad_fidelity(x, zf).values - ata_x.values).norm() == 0.0);

    // x = 0 value is 1/2 ||b||^2
    Sinogram b(geo.n_views, geo.n_detectors);
    b.values = rng::gaussian_vector(b.size(), 8);
    const LinearFidelity fid{geo, b};
    const Image zx(n, n, px);
    CHECK(fidelity_value(zx, fid) == doctest::Approx(0.5 * b.values.squaredNorm()));

    // central finite differences at h = 1e-6
    Image xr(n, n, px);
    xr.values = 0.1 * rng::gaussian_vector(n * n, 9);
    const Vector grad = grad_fidelity(xr, fid).values;
    auto value_at = [&](const Vector& v) {
        Image xi(n, n, px);
        xi.values = v;
        return fidelity_value(xi, fid);
    };
    const Vector fd = central_diff_grad(value_at, xr.values, 1e-6);
    CHECK((fd - grad).norm() / grad.norm() <= 1e-5);
}

TEST_CASE("forward_project: linearity") {
    const auto geo = micro_geometry();
    const Index n = 16;
    const Scalar px = geo.pixel_size_for(n);
    Image x(n, n, px), y(n, n, px), comb(n, n, px);
    x.values = rng::gaussian_vector(n * n, 21);
    y.values = rng::gaussian_vector(n * n, 22);
    comb.values = 0.7 * x.values + 1.9 * y.values;
    const Vector lhs = forward_project(comb, geo).values;
    const Vector rhs = 0.7 * forward_project(x, geo).values + 1.9 * forward_project(y, geo).values;
    CHECK((lhs - rhs).norm() <= 1e-12 * lhs.norm());
}

TEST_CASE("grad_fidelity: Lipschitz constant bounded by the operator norm") {
    const auto geo = micro_geometry();
    const Index n = 16;
    const Scalar px = geo.pixel_size_for(n);
    const double lmax = estimate_normal_op_norm(geo, n, 150);
    Sinogram b(geo.n_views, geo.n_detectors);
    b.values = rng::gaussian_vector(b.size(), 31);
    const LinearFidelity fid{geo, b};
    for (int t = 0; t < 20; ++t) {
        Image u(n, n, px), v(n, n, px);
        u.values = rng::gaussian_vector(n * n, 600 + static_cast<std::uint64_t>(t));
        v.values = rng::gaussian_vector(n * n, 700 + static_cast<std::uint64_t>(t));
        const double num =
            (grad_fidelity(u, fid).values - grad_fidelity(v, fid).values).norm();
        CHECK(num <= lmax * (1.0 + 1e-6) * (u.values - v.values).norm());
    }
}

TEST_CASE("fbp: zero sinogram and error paths") {
    const auto geo = FanBeamGeometry::desk_preset();
    const Sinogram zs(geo.n_views, geo.n_detectors);
    CHECK(fbp(zs, geo, 64).values.norm() == 0.0);

    auto one_view = FanBeamGeometry::with_uniform_views(250.0, 250.0, 16, 8.0, 1, 170.0);
    const Sinogram s1(1, 16);
    CHECK_THROWS(fbp(s1, one_view, 16));

    Image wrong(16, 16, 1.0); // extent 16 mm vs fov 170 mm
    CHECK_THROWS(forward_project(wrong, geo));
    const Sinogram bad(3, 5);
    CHECK_THROWS(back_project(bad, geo, 16));
}

TEST_CASE("fbp: clean full-size reconstruction quality (frozen regression)") {
    const auto geo = FanBeamGeometry::full_preset();
    const Index n = 256;
    Image ref = shepp_logan(n, geo.pixel_size_for(n));
    ref.values *= 0.1;
    const Sinogram clean = forward_project(ref, geo);
    const Image rec = fbp(clean, geo, n);
    const double p = psnr(rec, ref, ref.values.maxCoeff());
    CHECK(p >= 30.0);

    // noisy measurement reconstructs strictly worse than clean
    DoseModel dose;
    dose.incident_photons = 2.5e4;
    dose.seed = 7;
    const Sinogram noisy = simulate_noisy_sinogram(clean, dose);
    const Image rec_noisy = fbp(noisy, geo, n);
    CHECK(psnr(rec_noisy, ref, ref.values.maxCoeff()) < p);
}

TEST_CASE("fbp: reconstructed disk interior matches the analytic density") {
    // a clean scan of a uniform disk must reconstruct to the disk itself;
    // the interior mean pins the overall filter/backprojection scale
    const auto geo = FanBeamGeometry::desk_preset();
    const Index n = 96;
    Image disk(n, n, geo.pixel_size_for(n));
    const double radius = 55.0, density = 0.25;
    const double half = (n - 1.0) / 2.0;
    for (Index r = 0; r < n; ++r)
        for (Index c = 0; c < n; ++c) {
            const double x = (c - half) * disk.pixel_size;
            const double y = (half - r) * disk.pixel_size;
            if (x * x + y * y <= radius * radius) disk.at(r, c) = density;
        }
    const Image rec = fbp(forward_project(disk, geo), geo, n);
    double acc = 0.0;
    Index count = 0;
    for (Index r = 0; r < n; ++r)
        for (Index c = 0; c < n; ++c) {
            const double x = (c - half) * disk.pixel_size;
            const double y = (half - r) * disk.pixel_size;
            if (x * x + y * y <= 0.5 * radius * radius) { // away from the edge
                acc += rec.at(r, c);
                ++count;
            }
        }
    CHECK(acc / static_cast<double>(count) == doctest::Approx(density).epsilon(0.01));
}

TEST_CASE("fbp: hann window smooths relative to ramlak") {
    const auto geo = FanBeamGeometry::desk_preset();
    const Index n = 64;
    Image ref = shepp_logan(n, geo.pixel_size_for(n));
    ref.values *= 0.1;
    const Sinogram clean = forward_project(ref, geo);
    DoseModel dose;
    dose.incident_photons = 2.5e4;
    dose.seed = 3;
    const Sinogram noisy = simulate_noisy_sinogram(clean, dose);
    const Image ram = fbp(noisy, geo, n, FbpFilter::ramlak);
    const Image han = fbp(noisy, geo, n, FbpFilter::hann);
    auto roughness = [](const Image& im) {
        double acc = 0.0;
        for (Index r = 0; r + 1 < im.height; ++r)
            for (Index c = 0; c + 1 < im.width; ++c) {
                const double dx = im.at(r, c + 1) - im.at(r, c);
                const double dy = im.at(r + 1, c) - im.at(r, c);
                acc += dx * dx + dy * dy;
            }
        return acc;
    };
    CHECK(roughness(han) < roughness(ram));
}

TEST_CASE("geometry: validation") {
    auto g = FanBeamGeometry::desk_preset();
    CHECK_NOTHROW(validate(g));
    g.view_angles[1] = g.view_angles[0];
    CHECK_THROWS(validate(g));
    auto g2 = FanBeamGeometry::desk_preset();
    g2.source_to_center = -1.0;
    CHECK_THROWS(validate(g2));
}
