#pragma once

#include "elda/rng.hpp"
#include "elda/types.hpp"

#include <cmath>

namespace elda {

// Transmission noise model: the photon count behind line integral b is
//   I = Poisson(I0 * exp(-b)) + Normal(0, sigma_e2),
// and the noisy projection is log(I0 / I). Counts are clamped to at least
// clamp_floor photons so the logarithm stays finite at low dose.
struct DoseModel {
    Scalar incident_photons = 1.0e6; // I0
    Scalar electronic_variance = 10.0; // sigma_e^2
    std::uint64_t seed = 0;
    Scalar clamp_floor = 1.0;
};

inline Sinogram simulate_noisy_sinogram(const Sinogram& clean, const DoseModel& dose) {
    validate(clean);
    if (dose.incident_photons <= 0.0)
        throw std::invalid_argument("noise: incident photon count must be > 0");
    if (dose.electronic_variance < 0.0)
        throw std::invalid_argument("noise: electronic variance must be >= 0");
    if (clean.values.minCoeff() < 0.0)
        throw std::invalid_argument("noise: clean sinogram must be nonnegative");

    const Scalar sigma_e = std::sqrt(dose.electronic_variance);
    Sinogram out(clean.n_views, clean.n_detectors);
    for (Index i = 0; i < clean.size(); ++i) {
        auto g = rng::stream_at(dose.seed, static_cast<std::uint64_t>(i));
        const Scalar lambda = dose.incident_photons * std::exp(-clean.values[i]);
        Scalar photons = rng::poisson(g, lambda) + sigma_e * rng::normal(g);
        if (photons < dose.clamp_floor) photons = dose.clamp_floor;
        out.values[i] = std::log(dose.incident_photons / photons);
    }
    return out;
}

} // namespace elda
