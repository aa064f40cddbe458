#pragma once

#include "elda/rng.hpp"
#include "elda/types.hpp"

#include <json.hpp>

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <vector>

namespace elda {

// Which kernels back the Jacobian-transpose pass: the true transposed
// convolutions, or the stored learned ("inexact") transposes.
enum class GradMode { exact, inexact };

// One convolution layer: out_channels x in_channels kernels of size 3x3.
// Kernels are applied as sliding dot products (no spatial flip), zero
// padded to keep the output the same size as the input.
struct LayerWeights {
    Index out_channels = 0;
    Index in_channels = 0;
    std::vector<Eigen::Matrix3d> k; // indexed [o * in_channels + i]

    LayerWeights() = default;
    LayerWeights(Index out_ch, Index in_ch)
        : out_channels(out_ch), in_channels(in_ch),
          k(static_cast<std::size_t>(out_ch * in_ch), Eigen::Matrix3d::Zero()) {}

    Eigen::Matrix3d& at(Index o, Index i) { return k[static_cast<std::size_t>(o * in_channels + i)]; }
    const Eigen::Matrix3d& at(Index o, Index i) const {
        return k[static_cast<std::size_t>(o * in_channels + i)];
    }
};

// The weights of the feature transform g: an l-layer convolution stack
// with smoothed-ReLU activations between layers (none after the last).
// inexact_transposes, when present, stand in for the transposed kernels in
// the backward pass ("learned transpose" mode).
struct FilterBank {
    std::vector<LayerWeights> layers;
    std::optional<std::vector<LayerWeights>> inexact_transposes;
    Scalar activation_delta = 1e-3;

    Index layer_count() const { return static_cast<Index>(layers.size()); }
    Index feature_channels() const { return layers.back().out_channels; }
};

inline void validate(const FilterBank& fb) {
    if (fb.layers.empty()) throw std::invalid_argument("filter bank: no layers");
    if (fb.activation_delta <= 0.0)
        throw std::invalid_argument("filter bank: activation_delta must be > 0");
    if (fb.layers.front().in_channels != 1)
        throw std::invalid_argument("filter bank: first layer must take 1 channel");
    for (std::size_t q = 0; q < fb.layers.size(); ++q) {
        const auto& w = fb.layers[q];
        if (w.out_channels <= 0 || w.in_channels <= 0)
            throw std::invalid_argument("filter bank: empty layer");
        if (q > 0 && w.in_channels != fb.layers[q - 1].out_channels)
            throw std::invalid_argument("filter bank: channel mismatch between layers");
        for (const auto& m : w.k)
            if (!m.allFinite()) throw std::invalid_argument("filter bank: non-finite kernel");
    }
    if (fb.inexact_transposes) {
        if (fb.inexact_transposes->size() != fb.layers.size())
            throw std::invalid_argument("filter bank: inexact transpose layer count mismatch");
        for (std::size_t q = 0; q < fb.layers.size(); ++q) {
            const auto& wt = (*fb.inexact_transposes)[q];
            if (wt.out_channels != fb.layers[q].in_channels ||
                wt.in_channels != fb.layers[q].out_channels)
                throw std::invalid_argument("filter bank: inexact transpose shape mismatch");
        }
    }
}

// Transpose map of a convolution layer: swapped channels, spatially
// flipped kernels. Applying it (as a plain convolution) is the adjoint of
// applying the original layer.
inline LayerWeights transpose_layer(const LayerWeights& w) {
    LayerWeights t(w.in_channels, w.out_channels);
    for (Index o = 0; o < w.out_channels; ++o)
        for (Index i = 0; i < w.in_channels; ++i)
            for (Index u = 0; u < 3; ++u)
                for (Index v = 0; v < 3; ++v)
                    t.at(i, o)(u, v) = w.at(o, i)(2 - u, 2 - v);
    return t;
}

// --- presets -------------------------------------------------------------

// Horizontal/vertical finite differences; the l2,1 norm of these features
// is the (isotropic) total variation.
inline FilterBank tv_bank() {
    FilterBank fb;
    LayerWeights w(2, 1);
    w.at(0, 0)(1, 1) = -1.0;
    w.at(0, 0)(1, 2) = 1.0; // x(r, c+1) - x(r, c)
    w.at(1, 0)(1, 1) = -1.0;
    w.at(1, 0)(2, 1) = 1.0; // x(r+1, c) - x(r, c)
    fb.layers.push_back(std::move(w));
    return fb;
}

namespace detail {

// The eight non-constant 3x3 DCT-II basis kernels.
inline std::array<Eigen::Matrix3d, 8> dct3_ac_basis() {
    auto c = [](Index k, Index n) {
        return std::cos(M_PI * (2.0 * static_cast<Scalar>(n) + 1.0) * static_cast<Scalar>(k) / 6.0);
    };
    std::array<Eigen::Matrix3d, 8> basis;
    Index idx = 0;
    for (Index p = 0; p < 3; ++p)
        for (Index q = 0; q < 3; ++q) {
            if (p == 0 && q == 0) continue;
            Eigen::Matrix3d m;
            for (Index r = 0; r < 3; ++r)
                for (Index s = 0; s < 3; ++s) m(r, s) = c(p, r) * c(q, s);
            basis[idx++] = m / m.norm();
        }
    return basis;
}

inline Matrix random_orthogonal(Index n, rng::SplitMix64& g) {
    Matrix a(n, n);
    for (Index c = 0; c < n; ++c)
        for (Index r = 0; r < n; ++r) a(r, c) = rng::normal(g);
    Eigen::HouseholderQR<Matrix> qr(a);
    Matrix q = qr.householderQ();
    // fix signs so the factorization is unique
    const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Index i = 0; i < n; ++i)
        if (r(i, i) < 0.0) q.col(i) = -q.col(i);
    return q;
}

} // namespace detail

// 48 single-layer kernels built from seeded orthogonal mixes of the 3x3
// AC DCT basis (6 groups of 8).
inline FilterBank dct8_bank(std::uint64_t seed = 8ULL) {
    const auto basis = detail::dct3_ac_basis();
    rng::SplitMix64 g{seed};
    FilterBank fb;
    LayerWeights w(48, 1);
    for (Index grp = 0; grp < 6; ++grp) {
        const Matrix mix = detail::random_orthogonal(8, g);
        for (Index r = 0; r < 8; ++r) {
            Eigen::Matrix3d acc = Eigen::Matrix3d::Zero();
            for (Index b = 0; b < 8; ++b) acc += mix(r, b) * basis[static_cast<std::size_t>(b)];
            w.at(grp * 8 + r, 0) = acc;
        }
    }
    fb.layers.push_back(std::move(w));
    return fb;
}

// Xavier-scaled random stack with a recorded seed; the default sizes are
// 3x3 kernels, 48 channels, 4 layers.
inline FilterBank xavier_bank(Index n_layers = 4, Index channels = 48,
                              std::uint64_t seed = 42ULL) {
    if (n_layers < 1) throw std::invalid_argument("xavier_bank: need at least one layer");
    rng::SplitMix64 g{seed};
    FilterBank fb;
    for (Index q = 0; q < n_layers; ++q) {
        const Index in_ch = (q == 0) ? 1 : channels;
        const Index out_ch = channels;
        LayerWeights w(out_ch, in_ch);
        const Scalar limit = std::sqrt(6.0 / (9.0 * static_cast<Scalar>(in_ch + out_ch)));
        for (Index o = 0; o < out_ch; ++o)
            for (Index i = 0; i < in_ch; ++i)
                for (Index u = 0; u < 3; ++u)
                    for (Index v = 0; v < 3; ++v)
                        w.at(o, i)(u, v) = limit * (2.0 * rng::uniform01(g) - 1.0);
        fb.layers.push_back(std::move(w));
    }
    return fb;
}

// Fills in inexact transposes equal to the true transposed kernels.
inline void set_exact_transposes(FilterBank& fb) {
    std::vector<LayerWeights> t;
    t.reserve(fb.layers.size());
    for (const auto& w : fb.layers) t.push_back(transpose_layer(w));
    fb.inexact_transposes = std::move(t);
}

// Sets w~ = w^T + P with ||P||_F = rel_norm * ||w^T||_F per layer.
inline void set_perturbed_transposes(FilterBank& fb, Scalar rel_norm, std::uint64_t seed) {
    rng::SplitMix64 g{seed};
    std::vector<LayerWeights> t;
    t.reserve(fb.layers.size());
    for (const auto& w : fb.layers) {
        LayerWeights wt = transpose_layer(w);
        Scalar base_norm2 = 0.0;
        for (const auto& m : wt.k) base_norm2 += m.squaredNorm();
        LayerWeights pert(wt.out_channels, wt.in_channels);
        Scalar pert_norm2 = 0.0;
        for (auto& m : pert.k) {
            for (Index u = 0; u < 3; ++u)
                for (Index v = 0; v < 3; ++v) m(u, v) = rng::normal(g);
            pert_norm2 += m.squaredNorm();
        }
        const Scalar s = rel_norm * std::sqrt(base_norm2 / pert_norm2);
        for (std::size_t i = 0; i < wt.k.size(); ++i) wt.k[i] += s * pert.k[i];
        t.push_back(std::move(wt));
    }
    fb.inexact_transposes = std::move(t);
}

// Per-layer ||w~_q - w_q^T||_F plus their normalized mean square (the
// transpose-constraint metric).
struct TransposeDeviation {
    std::vector<Scalar> per_layer_frobenius;
    Scalar constraint_metric = 0.0; // (1/N_w) sum_q ||w~ - w^T||_F^2
};

inline TransposeDeviation inexact_transpose_deviation(const FilterBank& fb) {
    if (!fb.inexact_transposes)
        throw std::invalid_argument("filter bank: no inexact transposes present");
    TransposeDeviation dev;
    Scalar total_sq = 0.0;
    Index n_params = 0;
    for (std::size_t q = 0; q < fb.layers.size(); ++q) {
        const LayerWeights ref = transpose_layer(fb.layers[q]);
        const LayerWeights& wt = (*fb.inexact_transposes)[q];
        Scalar sq = 0.0;
        for (std::size_t i = 0; i < ref.k.size(); ++i) sq += (wt.k[i] - ref.k[i]).squaredNorm();
        dev.per_layer_frobenius.push_back(std::sqrt(sq));
        total_sq += sq;
        n_params += static_cast<Index>(wt.k.size()) * 9;
    }
    dev.constraint_metric = total_sq / static_cast<Scalar>(n_params);
    return dev;
}

// --- file format (.fb, JSON) ----------------------------------------------

namespace detail {

inline nlohmann::json layer_to_json(const LayerWeights& w) {
    nlohmann::json jl;
    jl["out_channels"] = w.out_channels;
    jl["in_channels"] = w.in_channels;
    auto& coeffs = jl["kernels"] = nlohmann::json::array();
    for (Index o = 0; o < w.out_channels; ++o) {
        nlohmann::json row = nlohmann::json::array();
        for (Index i = 0; i < w.in_channels; ++i) {
            nlohmann::json kk = nlohmann::json::array();
            for (Index u = 0; u < 3; ++u) {
                nlohmann::json kr = nlohmann::json::array();
                for (Index v = 0; v < 3; ++v) kr.push_back(w.at(o, i)(u, v));
                kk.push_back(kr);
            }
            row.push_back(kk);
        }
        coeffs.push_back(row);
    }
    return jl;
}

inline LayerWeights layer_from_json(const nlohmann::json& jl) {
    LayerWeights w(jl.at("out_channels").get<Index>(), jl.at("in_channels").get<Index>());
    const auto& coeffs = jl.at("kernels");
    if (static_cast<Index>(coeffs.size()) != w.out_channels)
        throw std::runtime_error("filter bank file: kernel row count mismatch");
    for (Index o = 0; o < w.out_channels; ++o) {
        const auto& row = coeffs[static_cast<std::size_t>(o)];
        if (static_cast<Index>(row.size()) != w.in_channels)
            throw std::runtime_error("filter bank file: kernel column count mismatch");
        for (Index i = 0; i < w.in_channels; ++i)
            for (Index u = 0; u < 3; ++u)
                for (Index v = 0; v < 3; ++v)
                    w.at(o, i)(u, v) =
                        row[static_cast<std::size_t>(i)][static_cast<std::size_t>(u)]
                           [static_cast<std::size_t>(v)]
                               .get<Scalar>();
    }
    return w;
}

} // namespace detail

inline void save_filter_bank(const FilterBank& fb, const std::filesystem::path& path) {
    validate(fb);
    nlohmann::json j;
    j["activation_delta"] = fb.activation_delta;
    auto& layers = j["layers"] = nlohmann::json::array();
    for (const auto& w : fb.layers) layers.push_back(detail::layer_to_json(w));
    if (fb.inexact_transposes) {
        auto& t = j["inexact_transposes"] = nlohmann::json::array();
        for (const auto& w : *fb.inexact_transposes) t.push_back(detail::layer_to_json(w));
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("filter bank: cannot open " + path.string());
    out << j.dump(1) << "\n";
}

inline FilterBank load_filter_bank(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("filter bank: cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("filter bank: corrupt file " + path.string() + ": " + e.what());
    }
    FilterBank fb;
    fb.activation_delta = j.at("activation_delta").get<Scalar>();
    for (const auto& jl : j.at("layers")) fb.layers.push_back(detail::layer_from_json(jl));
    if (j.contains("inexact_transposes")) {
        std::vector<LayerWeights> t;
        for (const auto& jl : j["inexact_transposes"]) t.push_back(detail::layer_from_json(jl));
        fb.inexact_transposes = std::move(t);
    }
    validate(fb);
    return fb;
}

// Resolves "tv", "dct8", "seeded-random" or a file path.
inline FilterBank resolve_filter_bank(const std::string& spec) {
    if (spec == "tv") return tv_bank();
    if (spec == "dct8") return dct8_bank();
    if (spec == "seeded-random") return xavier_bank();
    return load_filter_bank(spec);
}

} // namespace elda
