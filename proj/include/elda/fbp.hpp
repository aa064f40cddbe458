#pragma once

#include "elda/geometry.hpp"
#include "elda/parallel.hpp"
#include "elda/types.hpp"

#include <cmath>
#include <vector>

namespace elda {

enum class FbpFilter { ramlak, hann };

namespace detail {

// Band-limited ramp kernel sampled at the (virtual) detector pitch ds:
// h[0] = 1/(4 ds^2), h[n] = -1/(pi n ds)^2 for odd n, 0 for even n.
// The Hann variant smooths with the frequency window 0.5 + 0.5 cos(2 pi f ds),
// which in sample space is h_w[n] = 0.5 h[n] + 0.25 (h[n-1] + h[n+1]).
inline std::vector<Scalar> ramp_kernel(Index n_taps, Scalar ds, FbpFilter filter) {
    auto ramlak = [&](Index k) -> Scalar {
        const Index a = std::abs(k);
        if (a == 0) return 1.0 / (4.0 * ds * ds);
        if (a % 2 == 0) return 0.0;
        const Scalar pnd = M_PI * static_cast<Scalar>(a) * ds;
        return -1.0 / (pnd * pnd);
    };
    std::vector<Scalar> h(2 * n_taps - 1);
    for (Index k = -(n_taps - 1); k <= n_taps - 1; ++k) {
        const Index i = k + n_taps - 1;
        if (filter == FbpFilter::ramlak)
            h[i] = ramlak(k);
        else
            h[i] = 0.5 * ramlak(k) + 0.25 * (ramlak(k - 1) + ramlak(k + 1));
    }
    return h;
}

} // namespace detail

// Fan-beam filtered backprojection for the flat equispaced detector:
// cosine pre-weighting on the virtual detector through the rotation
// center, ramp filtering, then distance-weighted backprojection over the
// full scan. Used as the initializer x0.
inline Image fbp(const Sinogram& s, const FanBeamGeometry& geo, Index image_n,
                 FbpFilter filter = FbpFilter::ramlak) {
    validate(geo);
    validate(s);
    if (s.n_views != geo.n_views || s.n_detectors != geo.n_detectors)
        throw std::invalid_argument("fbp: sinogram shape does not match geometry");
    if (geo.n_views < 2) throw std::invalid_argument("fbp: need at least 2 views");

    const Index nd = geo.n_detectors;
    const Scalar rs = geo.source_to_center;
    const Scalar scale = rs / (rs + geo.detector_to_center); // real -> virtual detector
    const Scalar ds = geo.detector_width * scale;
    const Scalar half_d = (static_cast<Scalar>(nd) - 1.0) / 2.0;

    const auto kernel = detail::ramp_kernel(nd, ds, filter);

    // cosine weight at each virtual detector position
    std::vector<Scalar> cosw(nd);
    for (Index j = 0; j < nd; ++j) {
        const Scalar sj = (static_cast<Scalar>(j) - half_d) * ds;
        cosw[j] = rs / std::sqrt(rs * rs + sj * sj);
    }

    // filter every view: q[j] = ds/2 * sum_j' pw[j'] h[j - j']
    Matrix q(geo.n_views, nd);
    detail::parallel_for(geo.n_views, 16, [&](Index v0, Index v1) {
        std::vector<Scalar> pw(nd);
        for (Index v = v0; v < v1; ++v) {
            for (Index j = 0; j < nd; ++j) pw[j] = s.at(v, j) * cosw[j];
            for (Index j = 0; j < nd; ++j) {
                Scalar acc = 0.0;
                for (Index jp = 0; jp < nd; ++jp) acc += pw[jp] * kernel[j - jp + nd - 1];
                q(v, j) = 0.5 * ds * acc;
            }
        }
    });

    // backproject with 1/U^2 distance weighting; pixels are independent
    const Scalar px = geo.pixel_size_for(image_n);
    const Scalar dbeta = 2.0 * M_PI / static_cast<Scalar>(geo.n_views);
    const Scalar half_i = (static_cast<Scalar>(image_n) - 1.0) / 2.0;
    std::vector<Scalar> cb(geo.n_views), sb(geo.n_views);
    for (Index v = 0; v < geo.n_views; ++v) {
        cb[v] = std::cos(geo.view_angles[v]);
        sb[v] = std::sin(geo.view_angles[v]);
    }
    Image out(image_n, image_n, px);
    detail::parallel_for(image_n, 8, [&](Index r0, Index r1) {
        for (Index r = r0; r < r1; ++r) {
            const Scalar y = (half_i - static_cast<Scalar>(r)) * px;
            for (Index c = 0; c < image_n; ++c) {
                const Scalar x = (static_cast<Scalar>(c) - half_i) * px;
                Scalar acc = 0.0;
                for (Index v = 0; v < geo.n_views; ++v) {
                    const Scalar along = x * cb[v] + y * sb[v]; // toward the source
                    const Scalar tang = -x * sb[v] + y * cb[v]; // along the detector
                    const Scalar u = (rs - along) / rs;
                    const Scalar sv = rs * tang / (rs - along);
                    const Scalar jf = sv / ds + half_d;
                    const Scalar jfl = std::floor(jf);
                    const Index j0 = static_cast<Index>(jfl);
                    if (j0 < 0 || j0 + 1 >= nd) continue;
                    const Scalar w1 = jf - jfl;
                    acc += dbeta * ((1.0 - w1) * q(v, j0) + w1 * q(v, j0 + 1)) / (u * u);
                }
                out.at(r, c) = acc;
            }
        }
    });
    return out;
}

} // namespace elda
