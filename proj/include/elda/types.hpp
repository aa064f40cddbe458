#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace elda {

using Scalar = double;
using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// 2-D attenuation grid, stored row-major. This is the optimization variable.
struct Image {
    Index height = 0;
    Index width = 0;
    Scalar pixel_size = 1.0; // mm per pixel
    Vector values;           // row-major, height * width entries

    Image() = default;
    Image(Index h, Index w, Scalar px)
        : height(h), width(w), pixel_size(px), values(Vector::Zero(h * w)) {}

    Index size() const { return height * width; }
    Scalar& at(Index r, Index c) { return values[r * width + c]; }
    Scalar at(Index r, Index c) const { return values[r * width + c]; }
};

// Projection data, stored view-major: element (v, d) is the line integral
// seen by detector d at view v.
struct Sinogram {
    Index n_views = 0;
    Index n_detectors = 0;
    Vector values; // view-major, n_views * n_detectors entries

    Sinogram() = default;
    Sinogram(Index v, Index d)
        : n_views(v), n_detectors(d), values(Vector::Zero(v * d)) {}

    Index size() const { return n_views * n_detectors; }
    Scalar& at(Index v, Index d) { return values[v * n_detectors + d]; }
    Scalar at(Index v, Index d) const { return values[v * n_detectors + d]; }
};

// Dense feature matrix: column i is the d-vector of filter responses at
// location i (locations in row-major pixel order).
struct FeatureMap {
    Matrix values; // d x m

    FeatureMap() = default;
    explicit FeatureMap(Matrix v) : values(std::move(v)) {}
    FeatureMap(Index d, Index m) : values(Matrix::Zero(d, m)) {}

    Index channels() const { return values.rows(); }
    Index locations() const { return values.cols(); }
};

// Feature matrix with groups of `fold_rate` adjacent descriptors stacked
// into single columns; the nodes of the similarity graph.
struct FoldedFeatureMap {
    Index fold_rate = 1;
    Matrix values; // (kappa*d) x (m/kappa)

    Index folded_channels() const { return values.rows(); }
    Index folded_locations() const { return values.cols(); }
};

inline bool all_finite(const Vector& v) { return v.allFinite(); }
inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline void validate(const Image& im) {
    if (im.height <= 0 || im.width <= 0)
        throw std::invalid_argument("image: nonpositive dimensions");
    if (im.pixel_size <= 0.0)
        throw std::invalid_argument("image: pixel_size must be > 0");
    if (im.values.size() != im.height * im.width)
        throw std::invalid_argument("image: payload length does not match shape");
    if (!all_finite(im.values))
        throw std::invalid_argument("image: non-finite values");
}

inline void validate(const Sinogram& s) {
    if (s.n_views <= 0 || s.n_detectors <= 0)
        throw std::invalid_argument("sinogram: nonpositive dimensions");
    if (s.values.size() != s.n_views * s.n_detectors)
        throw std::invalid_argument("sinogram: payload length does not match shape");
    if (!all_finite(s.values))
        throw std::invalid_argument("sinogram: non-finite values");
}

inline void validate(const FeatureMap& f) {
    if (f.channels() <= 0 || f.locations() <= 0)
        throw std::invalid_argument("feature map: nonpositive dimensions");
    if (!all_finite(f.values))
        throw std::invalid_argument("feature map: non-finite values");
}

// Stacks groups of kappa adjacent descriptors (row-major location order)
// into single columns: output column i is (g_{ki}; ...; g_{ki+k-1}).
inline FoldedFeatureMap fold(const FeatureMap& f, Index kappa) {
    const Index d = f.channels();
    const Index m = f.locations();
    if (kappa < 1) throw std::invalid_argument("fold: kappa must be >= 1");
    if (m % kappa != 0)
        throw std::invalid_argument("fold: kappa does not divide location count");

    FoldedFeatureMap out;
    out.fold_rate = kappa;
    out.values.resize(kappa * d, m / kappa);
    for (Index i = 0; i < m / kappa; ++i)
        for (Index j = 0; j < kappa; ++j)
            out.values.block(j * d, i, d, 1) = f.values.col(i * kappa + j);
    return out;
}

// Inverse of fold (fold is a permutation of entries).
inline FeatureMap unfold(const FoldedFeatureMap& g) {
    const Index kappa = g.fold_rate;
    const Index d = g.folded_channels() / kappa;
    if (g.folded_channels() % kappa != 0)
        throw std::invalid_argument("unfold: folded channel count inconsistent with fold rate");

    FeatureMap out(d, g.folded_locations() * kappa);
    for (Index i = 0; i < g.folded_locations(); ++i)
        for (Index j = 0; j < kappa; ++j)
            out.values.col(i * kappa + j) = g.values.block(j * d, i, d, 1);
    return out;
}

// Adjoint of fold. Since fold is a permutation, this is exactly unfold:
// <fold(a), b> = <a, unfold_adjoint(b)> holds without rounding.
inline FeatureMap unfold_adjoint(const FoldedFeatureMap& cotangent) {
    return unfold(cotangent);
}

} // namespace elda
