#pragma once

#include "elda/geometry.hpp"
#include "elda/parallel.hpp"
#include "elda/rng.hpp"
#include "elda/types.hpp"

#include <cmath>

namespace elda {

namespace detail {

struct Point {
    Scalar x, y;
};

// Source and detector-element positions for one ray. The source rotates on
// a circle of radius sad; detector element centers sit on a line through
// -dcd * (cos b, sin b) with tangential direction (-sin b, cos b).
inline Point ray_source(const FanBeamGeometry& g, Index view) {
    const Scalar b = g.view_angles[view];
    return {g.source_to_center * std::cos(b), g.source_to_center * std::sin(b)};
}

inline Point ray_endpoint(const FanBeamGeometry& g, Index view, Index det) {
    const Scalar b = g.view_angles[view];
    const Scalar off =
        (static_cast<Scalar>(det) - (static_cast<Scalar>(g.n_detectors) - 1.0) / 2.0) *
        g.detector_width;
    return {-g.detector_to_center * std::cos(b) - off * std::sin(b),
            -g.detector_to_center * std::sin(b) + off * std::cos(b)};
}

// Joseph traversal: march along the dominant axis through pixel-center
// lines, linearly interpolating across the other axis. visit(p, w) is
// called with a linear pixel index and the interpolation weight times the
// step length; the same enumeration backs both A and its transpose, which
// is what makes the pair algebraically matched.
template <class Visit>
inline void trace_ray(const Point& s, const Point& e, Index n, Scalar px, Visit&& visit) {
    const Scalar dx = e.x - s.x;
    const Scalar dy = e.y - s.y;
    const Scalar len = std::sqrt(dx * dx + dy * dy);
    const Scalar half = (static_cast<Scalar>(n) - 1.0) / 2.0;

    if (std::abs(dx) >= std::abs(dy)) {
        const Scalar step = px * len / std::abs(dx);
        for (Index c = 0; c < n; ++c) {
            const Scalar xc = (static_cast<Scalar>(c) - half) * px;
            const Scalar t = (xc - s.x) / dx;
            if (t < 0.0 || t > 1.0) continue;
            const Scalar y = s.y + t * dy;
            const Scalar rf = half - y / px;
            const Scalar rfl = std::floor(rf);
            const Index r0 = static_cast<Index>(rfl);
            const Scalar w1 = rf - rfl;
            if (r0 >= 0 && r0 < n) visit(r0 * n + c, (1.0 - w1) * step);
            if (r0 + 1 >= 0 && r0 + 1 < n) visit((r0 + 1) * n + c, w1 * step);
        }
    } else {
        const Scalar step = px * len / std::abs(dy);
        for (Index r = 0; r < n; ++r) {
            const Scalar yr = (half - static_cast<Scalar>(r)) * px;
            const Scalar t = (yr - s.y) / dy;
            if (t < 0.0 || t > 1.0) continue;
            const Scalar x = s.x + t * dx;
            const Scalar cf = x / px + half;
            const Scalar cfl = std::floor(cf);
            const Index c0 = static_cast<Index>(cfl);
            const Scalar w1 = cf - cfl;
            if (c0 >= 0 && c0 < n) visit(r * n + c0, (1.0 - w1) * step);
            if (c0 + 1 >= 0 && c0 + 1 < n) visit(r * n + c0 + 1, w1 * step);
        }
    }
}

inline void check_image_geometry(const Image& x, const FanBeamGeometry& g) {
    if (x.height != x.width)
        throw std::invalid_argument("projector: image must be square");
    const Scalar extent = x.pixel_size * static_cast<Scalar>(x.width);
    if (std::abs(extent - g.fov) > 1e-9 * g.fov)
        throw std::invalid_argument("projector: image extent does not match geometry fov");
}

} // namespace detail

// Discretized line integrals of x along every source -> detector-cell ray.
// Linear in x; rays are accumulated in a fixed order.
inline Sinogram forward_project(const Image& x, const FanBeamGeometry& geo) {
    validate(geo);
    detail::check_image_geometry(x, geo);
    const Index n = x.width;
    Sinogram out(geo.n_views, geo.n_detectors);
    // views write disjoint sinogram rows, so chunking cannot change a bit
    detail::parallel_for(geo.n_views, 16, [&](Index v0, Index v1) {
        for (Index v = v0; v < v1; ++v) {
            const auto s = detail::ray_source(geo, v);
            for (Index d = 0; d < geo.n_detectors; ++d) {
                const auto e = detail::ray_endpoint(geo, v, d);
                Scalar acc = 0.0;
                detail::trace_ray(s, e, n, x.pixel_size,
                                  [&](Index p, Scalar w) { acc += x.values[p] * w; });
                out.at(v, d) = acc;
            }
        }
    });
    return out;
}

// Exact algebraic transpose of forward_project for the same image grid:
// <Ax, y> = <x, A^T y> up to rounding.
inline Image back_project(const Sinogram& s, const FanBeamGeometry& geo, Index image_n) {
    validate(geo);
    validate(s);
    if (s.n_views != geo.n_views || s.n_detectors != geo.n_detectors)
        throw std::invalid_argument("back_project: sinogram shape does not match geometry");
    Image out(image_n, image_n, geo.pixel_size_for(image_n));
    // view chunks scatter into private partial images that are summed in a
    // fixed order, keeping the accumulation bit-identical for any thread count
    detail::parallel_reduce(
        geo.n_views, 16, [&] { return Vector(Vector::Zero(image_n * image_n)); },
        [&](Index v0, Index v1, Vector& partial) {
            for (Index v = v0; v < v1; ++v) {
                const auto src = detail::ray_source(geo, v);
                for (Index d = 0; d < geo.n_detectors; ++d) {
                    const auto e = detail::ray_endpoint(geo, v, d);
                    const Scalar val = s.at(v, d);
                    detail::trace_ray(src, e, image_n, out.pixel_size,
                                      [&](Index p, Scalar w) { partial[p] += val * w; });
                }
            }
        },
        [&](const Vector& partial) { out.values += partial; });
    return out;
}

// 1/2 ||Ax - b||^2
inline Scalar fidelity_value(const Image& x, const LinearFidelity& fid) {
    const Sinogram ax = forward_project(x, fid.geometry);
    return 0.5 * (ax.values - fid.data.values).squaredNorm();
}

// A^T (Ax - b)
inline Image grad_fidelity(const Image& x, const LinearFidelity& fid) {
    Sinogram residual = forward_project(x, fid.geometry);
    residual.values -= fid.data.values;
    return back_project(residual, fid.geometry, x.width);
}

// Largest eigenvalue of A^T A (= ||A||^2) by power iteration from a seeded
// start; used as the default inverse step size.
inline Scalar estimate_normal_op_norm(const FanBeamGeometry& geo, Index image_n,
                                      int iterations = 30, std::uint64_t seed = 20240501ULL) {
    const Scalar px = geo.pixel_size_for(image_n);
    Image v(image_n, image_n, px);
    v.values = rng::gaussian_vector(image_n * image_n, seed);
    v.values.normalize();
    Scalar lambda = 0.0;
    for (int it = 0; it < iterations; ++it) {
        const Image w = back_project(forward_project(v, geo), geo, image_n);
        lambda = v.values.dot(w.values);
        const Scalar norm = w.values.norm();
        if (norm == 0.0) return 0.0;
        v.values = w.values / norm;
    }
    return lambda;
}

} // namespace elda
