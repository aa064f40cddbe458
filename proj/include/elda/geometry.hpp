#pragma once

#include "elda/types.hpp"

#include <cmath>
#include <vector>

namespace elda {

// Fan-beam scanner model: point source on a circle of radius
// source_to_center, flat detector array on the opposite side at
// detector_to_center, both rotating about the image center. View angles
// are evenly spaced over a full scan.
struct FanBeamGeometry {
    Scalar source_to_center = 250.0;   // mm
    Scalar detector_to_center = 250.0; // mm
    Index n_detectors = 512;
    Scalar detector_width = 0.72; // mm
    Index n_views = 1024;
    Scalar fov = 170.0; // mm, square image region
    std::vector<Scalar> view_angles;

    static FanBeamGeometry with_uniform_views(Scalar sad, Scalar dcd, Index n_det,
                                              Scalar det_w, Index n_views, Scalar fov) {
        FanBeamGeometry g;
        g.source_to_center = sad;
        g.detector_to_center = dcd;
        g.n_detectors = n_det;
        g.detector_width = det_w;
        g.n_views = n_views;
        g.fov = fov;
        g.view_angles.resize(n_views);
        for (Index i = 0; i < n_views; ++i)
            g.view_angles[i] = 2.0 * M_PI * static_cast<Scalar>(i) / static_cast<Scalar>(n_views);
        return g;
    }

    // Full-size scan: 512 detectors of 0.72 mm, 1024 views, 170 mm FOV.
    static FanBeamGeometry full_preset() {
        return with_uniform_views(250.0, 250.0, 512, 0.72, 1024, 170.0);
    }

    // Scaled-down preset for fast tests: 128 detectors, 180 views.
    static FanBeamGeometry desk_preset() {
        return with_uniform_views(250.0, 250.0, 128, 2.88, 180, 170.0);
    }

    Scalar pixel_size_for(Index image_n) const { return fov / static_cast<Scalar>(image_n); }
};

inline void validate(const FanBeamGeometry& g) {
    if (g.source_to_center <= 0.0 || g.detector_to_center <= 0.0)
        throw std::invalid_argument("geometry: distances must be > 0");
    if (g.n_detectors <= 0 || g.detector_width <= 0.0)
        throw std::invalid_argument("geometry: detector layout invalid");
    if (g.fov <= 0.0) throw std::invalid_argument("geometry: fov must be > 0");
    if (g.n_views < 1) throw std::invalid_argument("geometry: n_views must be >= 1");
    if (static_cast<Index>(g.view_angles.size()) != g.n_views)
        throw std::invalid_argument("geometry: view angle count mismatch");
    for (Index i = 0; i < g.n_views; ++i) {
        if (g.view_angles[i] < 0.0 || g.view_angles[i] >= 2.0 * M_PI)
            throw std::invalid_argument("geometry: view angles must lie in [0, 2*pi)");
        if (i > 0 && g.view_angles[i] <= g.view_angles[i - 1])
            throw std::invalid_argument("geometry: view angles must be strictly increasing");
    }
}

// The data-fidelity problem 1/2 ||Ax - b||^2.
struct LinearFidelity {
    FanBeamGeometry geometry;
    Sinogram data;
};

inline void validate(const LinearFidelity& fid) {
    validate(fid.geometry);
    validate(fid.data);
    if (fid.data.n_views != fid.geometry.n_views ||
        fid.data.n_detectors != fid.geometry.n_detectors)
        throw std::invalid_argument("fidelity: sinogram shape does not match geometry");
}

} // namespace elda
