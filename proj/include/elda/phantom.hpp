#pragma once

#include "elda/types.hpp"

#include <array>
#include <cmath>

namespace elda {

// One ellipse of the phantom: additive density, semi-axes, center and
// rotation, all in the unit square [-1,1]^2.
struct PhantomEllipse {
    Scalar density, a, b, x0, y0, phi_deg;
};

// The ten ellipses of the Shepp-Logan head phantom with the high-contrast
// (Toft) density set; all pixel values land in [0, 1].
inline const std::array<PhantomEllipse, 10>& shepp_logan_ellipses() {
    static const std::array<PhantomEllipse, 10> e = {{
        {1.00, 0.6900, 0.9200, 0.00, 0.0000, 0.0},
        {-0.80, 0.6624, 0.8740, 0.00, -0.0184, 0.0},
        {-0.20, 0.1100, 0.3100, 0.22, 0.0000, -18.0},
        {-0.20, 0.1600, 0.4100, -0.22, 0.0000, 18.0},
        {0.10, 0.2100, 0.2500, 0.00, 0.3500, 0.0},
        {0.10, 0.0460, 0.0460, 0.00, 0.1000, 0.0},
        {0.10, 0.0460, 0.0460, 0.00, -0.1000, 0.0},
        {0.10, 0.0460, 0.0230, -0.08, -0.6050, 0.0},
        {0.10, 0.0230, 0.0230, 0.00, -0.6060, 0.0},
        {0.10, 0.0230, 0.0460, 0.06, -0.6050, 0.0},
    }};
    return e;
}

inline bool inside_ellipse(const PhantomEllipse& e, Scalar u, Scalar v) {
    const Scalar phi = e.phi_deg * M_PI / 180.0;
    const Scalar du = u - e.x0;
    const Scalar dv = v - e.y0;
    const Scalar ur = du * std::cos(phi) + dv * std::sin(phi);
    const Scalar vr = -du * std::sin(phi) + dv * std::cos(phi);
    return (ur * ur) / (e.a * e.a) + (vr * vr) / (e.b * e.b) <= 1.0;
}

// Phantom density at a point of the unit square (sum of covering ellipses).
inline Scalar shepp_logan_density(Scalar u, Scalar v) {
    Scalar acc = 0.0;
    for (const auto& e : shepp_logan_ellipses())
        if (inside_ellipse(e, u, v)) acc += e.density;
    return acc;
}

// n x n Shepp-Logan phantom sampled at pixel centers. pixel_size is left
// at 1.0; simulation pipelines rescale it to their field of view.
inline Image shepp_logan(Index n, Scalar pixel_size = 1.0) {
    if (n < 16) throw std::invalid_argument("shepp_logan: n must be >= 16");
    Image im(n, n, pixel_size);
    for (Index r = 0; r < n; ++r) {
        const Scalar v = 1.0 - (2.0 * static_cast<Scalar>(r) + 1.0) / static_cast<Scalar>(n);
        for (Index c = 0; c < n; ++c) {
            const Scalar u = (2.0 * static_cast<Scalar>(c) + 1.0) / static_cast<Scalar>(n) - 1.0;
            im.at(r, c) = shepp_logan_density(u, v);
        }
    }
    return im;
}

} // namespace elda
