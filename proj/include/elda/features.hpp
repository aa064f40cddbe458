#pragma once

#include "elda/filter_bank.hpp"
#include "elda/parallel.hpp"
#include "elda/types.hpp"

#include <vector>

namespace elda {

// Smoothed rectified linear unit: 0 below -delta, identity above +delta,
// the C1 quadratic stitch x^2/(4 delta) + x/2 + delta/4 in between.
inline Scalar sigma(Scalar t, Scalar delta) {
    if (t <= -delta) return 0.0;
    if (t >= delta) return t;
    return t * t / (4.0 * delta) + 0.5 * t + 0.25 * delta;
}

// Derivative of sigma; ranges over [0, 1], continuous at the knots.
inline Scalar sigma_prime(Scalar t, Scalar delta) {
    if (t <= -delta) return 0.0;
    if (t >= delta) return 1.0;
    return t / (2.0 * delta) + 0.5;
}

// A multi-channel image as a stack of H x W planes.
using ChannelStack = std::vector<Matrix>;

// Per-layer pre-activation planes cached during a forward pass; the
// backward pass needs them for the sigma' masks.
struct ActivationState {
    Index height = 0, width = 0;
    std::vector<ChannelStack> pre_activations; // layers 1 .. l-1
};

namespace detail {

// Zero-padded same-size 3x3 correlation: out(r,c) += K(u+1,v+1) in(r+u,c+v).
// Written as nine shifted block updates so Eigen vectorizes the interior.
inline void accumulate_conv(Matrix& out, const Matrix& in, const Eigen::Matrix3d& k) {
    const Index h = in.rows(), w = in.cols();
    for (Index u = -1; u <= 1; ++u)
        for (Index v = -1; v <= 1; ++v) {
            const Scalar kw = k(u + 1, v + 1);
            if (kw == 0.0) continue;
            const Index r0 = std::max<Index>(0, -u), r1 = std::min(h, h - u);
            const Index c0 = std::max<Index>(0, -v), c1 = std::min(w, w - v);
            if (r1 <= r0 || c1 <= c0) continue;
            out.block(r0, c0, r1 - r0, c1 - c0) +=
                kw * in.block(r0 + u, c0 + v, r1 - r0, c1 - c0);
        }
}

inline ChannelStack conv_layer(const ChannelStack& in, const LayerWeights& w) {
    if (static_cast<Index>(in.size()) != w.in_channels)
        throw std::invalid_argument("conv: channel mismatch");
    const Index h = in.front().rows(), wid = in.front().cols();
    ChannelStack out(static_cast<std::size_t>(w.out_channels), Matrix::Zero(h, wid));
    // output planes are disjoint, so channel chunking is bit-neutral
    const Index work_per_channel = w.in_channels * h * wid;
    const Index grain = std::max<Index>(1, 200000 / std::max<Index>(1, work_per_channel));
    parallel_for(w.out_channels, grain, [&](Index o0, Index o1) {
        for (Index o = o0; o < o1; ++o)
            for (Index i = 0; i < w.in_channels; ++i)
                accumulate_conv(out[static_cast<std::size_t>(o)],
                                in[static_cast<std::size_t>(i)], w.at(o, i));
    });
    return out;
}

inline FeatureMap stack_to_features(const ChannelStack& s) {
    const Index h = s.front().rows(), w = s.front().cols();
    FeatureMap f(static_cast<Index>(s.size()), h * w);
    for (Index ch = 0; ch < f.channels(); ++ch)
        for (Index r = 0; r < h; ++r)
            for (Index c = 0; c < w; ++c)
                f.values(ch, r * w + c) = s[static_cast<std::size_t>(ch)](r, c);
    return f;
}

inline ChannelStack features_to_stack(const FeatureMap& f, Index h, Index w) {
    if (f.locations() != h * w)
        throw std::invalid_argument("features: location count does not match image size");
    ChannelStack s(static_cast<std::size_t>(f.channels()), Matrix(h, w));
    for (Index ch = 0; ch < f.channels(); ++ch)
        for (Index r = 0; r < h; ++r)
            for (Index c = 0; c < w; ++c)
                s[static_cast<std::size_t>(ch)](r, c) = f.values(ch, r * w + c);
    return s;
}

} // namespace detail

struct ForwardPass {
    FeatureMap features;
    ActivationState state;
};

// g(x) = w_l * sigma( ... sigma(w_1 * x)); the last layer stays linear.
// m = height * width (same-size zero padding throughout).
inline ForwardPass forward_g(const Image& x, const FilterBank& fb) {
    validate(fb);
    ForwardPass fp;
    fp.state.height = x.height;
    fp.state.width = x.width;

    ChannelStack h(1, Matrix(x.height, x.width));
    for (Index r = 0; r < x.height; ++r)
        for (Index c = 0; c < x.width; ++c) h[0](r, c) = x.at(r, c);

    const Index l = fb.layer_count();
    for (Index q = 0; q < l; ++q) {
        ChannelStack a = detail::conv_layer(h, fb.layers[static_cast<std::size_t>(q)]);
        if (q + 1 < l) {
            fp.state.pre_activations.push_back(a);
            h.resize(a.size());
            for (std::size_t ch = 0; ch < a.size(); ++ch)
                h[ch] = a[ch].unaryExpr(
                    [d = fb.activation_delta](Scalar t) { return sigma(t, d); });
        } else {
            fp.features = detail::stack_to_features(a);
        }
    }
    return fp;
}

inline FeatureMap apply_g(const Image& x, const FilterBank& fb) {
    return forward_g(x, fb).features;
}

// grad g(x)^T v via the chain rule: transposed convolutions interleaved
// with sigma' masks from the forward pass. In inexact mode the stored
// learned transposes w~ replace the true transposed kernels.
inline Image jacobian_T_apply(const ActivationState& state, const FilterBank& fb,
                              const FeatureMap& v, GradMode mode, Scalar pixel_size) {
    if (v.channels() != fb.feature_channels())
        throw std::invalid_argument("jacobian_T_apply: cotangent channel mismatch");
    if (mode == GradMode::inexact && !fb.inexact_transposes)
        throw std::invalid_argument("jacobian_T_apply: inexact mode requires stored transposes");

    ChannelStack ct = detail::features_to_stack(v, state.height, state.width);
    const Index l = fb.layer_count();
    for (Index q = l - 1; q >= 0; --q) {
        const LayerWeights back =
            (mode == GradMode::inexact)
                ? (*fb.inexact_transposes)[static_cast<std::size_t>(q)]
                : transpose_layer(fb.layers[static_cast<std::size_t>(q)]);
        ct = detail::conv_layer(ct, back);
        if (q > 0) {
            const ChannelStack& a = state.pre_activations[static_cast<std::size_t>(q - 1)];
            for (std::size_t ch = 0; ch < ct.size(); ++ch)
                ct[ch] = ct[ch].cwiseProduct(a[ch].unaryExpr(
                    [d = fb.activation_delta](Scalar t) { return sigma_prime(t, d); }));
        }
    }

    Image out(state.height, state.width, pixel_size);
    for (Index r = 0; r < state.height; ++r)
        for (Index c = 0; c < state.width; ++c) out.at(r, c) = ct[0](r, c);
    return out;
}

inline Image jacobian_T_apply(const Image& x, const FilterBank& fb, const FeatureMap& v,
                              GradMode mode = GradMode::exact) {
    const ForwardPass fp = forward_g(x, fb);
    return jacobian_T_apply(fp.state, fb, v, mode, x.pixel_size);
}

} // namespace elda
