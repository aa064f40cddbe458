#pragma once

#include "elda/types.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace elda {

inline constexpr Scalar kPsnrCapDb = 200.0;

// 10*log10(peak^2 / MSE), capped at 200 dB (the zero-MSE convention).
inline Scalar psnr(const Image& x, const Image& ref, Scalar peak) {
    if (x.height != ref.height || x.width != ref.width)
        throw std::invalid_argument("psnr: shape mismatch");
    if (peak <= 0.0) throw std::invalid_argument("psnr: peak must be > 0");
    const Scalar mse = (x.values - ref.values).squaredNorm() / static_cast<Scalar>(x.size());
    if (mse == 0.0) return kPsnrCapDb;
    return std::min(kPsnrCapDb, 10.0 * std::log10(peak * peak / mse));
}

struct SsimParams {
    Index window = 11;
    Scalar sigma = 1.5;
    Scalar k1 = 0.01;
    Scalar k2 = 0.03;
    Scalar peak = 1.0; // dynamic range
};

// Mean local SSIM over all fully-interior windows, Gaussian-weighted
// moments, the usual (2*mu*mu + C1)(2*cov + C2) / ... form.
inline Scalar ssim(const Image& x, const Image& ref, const SsimParams& p = {}) {
    if (x.height != ref.height || x.width != ref.width)
        throw std::invalid_argument("ssim: shape mismatch");
    if (x.height < p.window || x.width < p.window)
        throw std::invalid_argument("ssim: image smaller than window");

    const Index w = p.window;
    const Index half = w / 2;
    Matrix kernel(w, w);
    for (Index r = 0; r < w; ++r)
        for (Index c = 0; c < w; ++c) {
            const Scalar dr = static_cast<Scalar>(r - half);
            const Scalar dc = static_cast<Scalar>(c - half);
            kernel(r, c) = std::exp(-(dr * dr + dc * dc) / (2.0 * p.sigma * p.sigma));
        }
    kernel /= kernel.sum();

    const Scalar c1 = (p.k1 * p.peak) * (p.k1 * p.peak);
    const Scalar c2 = (p.k2 * p.peak) * (p.k2 * p.peak);

    auto patch = [&](const Image& im, Index r0, Index c0) {
        Matrix m(w, w);
        for (Index r = 0; r < w; ++r)
            for (Index c = 0; c < w; ++c) m(r, c) = im.at(r0 + r, c0 + c);
        return m;
    };

    Scalar acc = 0.0;
    Index count = 0;
    for (Index r0 = 0; r0 + w <= x.height; ++r0)
        for (Index c0 = 0; c0 + w <= x.width; ++c0) {
            const Matrix a = patch(x, r0, c0);
            const Matrix b = patch(ref, r0, c0);
            const Scalar mu_a = (kernel.cwiseProduct(a)).sum();
            const Scalar mu_b = (kernel.cwiseProduct(b)).sum();
            const Scalar var_a = (kernel.cwiseProduct(a.cwiseProduct(a))).sum() - mu_a * mu_a;
            const Scalar var_b = (kernel.cwiseProduct(b.cwiseProduct(b))).sum() - mu_b * mu_b;
            const Scalar cov = (kernel.cwiseProduct(a.cwiseProduct(b))).sum() - mu_a * mu_b;
            const Scalar num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            const Scalar den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            acc += num / den;
            ++count;
        }
    return acc / static_cast<Scalar>(count);
}

struct QualityRow {
    std::string image_id;
    Scalar psnr_db = 0.0;
    Scalar ssim = 0.0;
};

// Per-image rows plus aggregate mean and standard deviation, recomputable
// from the rows.
struct QualityReport {
    std::vector<QualityRow> rows;

    Scalar mean_psnr() const {
        Scalar s = 0.0;
        for (const auto& r : rows) s += r.psnr_db;
        return s / static_cast<Scalar>(rows.size());
    }
    Scalar mean_ssim() const {
        Scalar s = 0.0;
        for (const auto& r : rows) s += r.ssim;
        return s / static_cast<Scalar>(rows.size());
    }
    Scalar std_psnr() const { return stdev([](const QualityRow& r) { return r.psnr_db; }); }
    Scalar std_ssim() const { return stdev([](const QualityRow& r) { return r.ssim; }); }

  private:
    template <class F>
    Scalar stdev(F f) const {
        if (rows.size() < 2) return 0.0;
        Scalar mean = 0.0;
        for (const auto& r : rows) mean += f(r);
        mean /= static_cast<Scalar>(rows.size());
        Scalar acc = 0.0;
        for (const auto& r : rows) acc += (f(r) - mean) * (f(r) - mean);
        return std::sqrt(acc / static_cast<Scalar>(rows.size() - 1));
    }
};

} // namespace elda
