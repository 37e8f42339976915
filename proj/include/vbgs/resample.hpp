#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "vbgs/errors.hpp"
#include "vbgs/image.hpp"

namespace vbgs {

enum class Interpolation { Bilinear, Bicubic };

/// Catmull-Rom style cubic convolution kernel (a = -0.5).
inline double cubic_kernel(double x, double a = -0.5) {
    const double t = std::abs(x);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
    return 0.0;
}

/// Output size floor(r * n), at least one pixel.
inline std::size_t scaled_extent(std::size_t n, double r) {
    if (!(r > 0.0) || !std::isfinite(r)) throw ParameterError("scale factor must be positive and finite");
    const double v = std::floor(r * static_cast<double>(n) + 1e-9);
    if (v < 1.0) throw ParameterError("scale factor produces an empty image");
    return static_cast<std::size_t>(v);
}

namespace detail {

/// Sparse 1D resampling weights for each output sample, with source
/// indices clamped to the border (replicate).
struct AxisWeights {
    std::vector<std::size_t> offsets;  // out + 1 entries
    std::vector<std::size_t> taps;
    std::vector<double> weights;
};

inline AxisWeights linear_axis(std::size_t in, std::size_t out) {
    AxisWeights aw;
    aw.offsets.push_back(0);
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t i = 0; i < out; ++i) {
        double u = (static_cast<double>(i) + 0.5) * ratio - 0.5;
        u = std::clamp(u, 0.0, static_cast<double>(in - 1));
        const auto i0 = static_cast<std::size_t>(std::floor(u));
        const std::size_t i1 = std::min(i0 + 1, in - 1);
        const double f = u - static_cast<double>(i0);
        aw.taps.push_back(i0);
        aw.weights.push_back(1.0 - f);
        aw.taps.push_back(i1);
        aw.weights.push_back(f);
        aw.offsets.push_back(aw.taps.size());
    }
    return aw;
}

/// Cubic convolution; when shrinking and antialias is set, the kernel is
/// stretched by 1/scale so every input sample is covered.
inline AxisWeights cubic_axis(std::size_t in, std::size_t out, bool antialias) {
    AxisWeights aw;
    aw.offsets.push_back(0);
    const double scale = static_cast<double>(out) / static_cast<double>(in);
    const double stretch = (antialias && scale < 1.0) ? scale : 1.0;
    const double support = 2.0 / stretch;
    const auto last = static_cast<std::ptrdiff_t>(in) - 1;
    for (std::size_t i = 0; i < out; ++i) {
        const double u = (static_cast<double>(i) + 0.5) / scale - 0.5;
        const auto lo = static_cast<std::ptrdiff_t>(std::floor(u - support));
        const auto hi = static_cast<std::ptrdiff_t>(std::ceil(u + support));
        double total = 0.0;
        const std::size_t start = aw.taps.size();
        for (std::ptrdiff_t j = lo; j <= hi; ++j) {
            const double w = stretch * cubic_kernel(stretch * (u - static_cast<double>(j)));
            if (w == 0.0) continue;
            aw.taps.push_back(static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(j, 0, last)));
            aw.weights.push_back(w);
            total += w;
        }
        for (std::size_t t = start; t < aw.taps.size(); ++t) aw.weights[t] /= total;
        aw.offsets.push_back(aw.taps.size());
    }
    return aw;
}

inline MultiBandImage separable_resample(const MultiBandImage& src, const AxisWeights& ax, const AxisWeights& ay,
                                         std::size_t out_w, std::size_t out_h) {
    ImageMeta meta = src.meta();
    meta.width = out_w;
    meta.height = out_h;
    MultiBandImage out(meta);
    std::vector<double> rows(src.height() * out_w);
    for (std::size_t b = 0; b < src.bands(); ++b) {
        for (std::size_t r = 0; r < src.height(); ++r)
            for (std::size_t i = 0; i < out_w; ++i) {
                double acc = 0.0;
                for (std::size_t t = ax.offsets[i]; t < ax.offsets[i + 1]; ++t)
                    acc += ax.weights[t] * src.at(b, r, ax.taps[t]);
                rows[r * out_w + i] = acc;
            }
        for (std::size_t j = 0; j < out_h; ++j)
            for (std::size_t i = 0; i < out_w; ++i) {
                double acc = 0.0;
                for (std::size_t t = ay.offsets[j]; t < ay.offsets[j + 1]; ++t)
                    acc += ay.weights[t] * rows[ay.taps[t] * out_w + i];
                out.at(b, j, i) = acc;
            }
    }
    return out;
}

}  // namespace detail

/// Pixel-center aligned bilinear resize with border replication.
inline MultiBandImage bilinear_resize(const MultiBandImage& src, std::size_t out_w, std::size_t out_h) {
    if (out_w == 0 || out_h == 0) throw ParameterError("resize target must be non-empty");
    return detail::separable_resample(src, detail::linear_axis(src.width(), out_w),
                                      detail::linear_axis(src.height(), out_h), out_w, out_h);
}

/// Pixel-center aligned cubic convolution resize (a = -0.5) with border
/// replication. Antialiasing widens the kernel when shrinking.
inline MultiBandImage bicubic_resize(const MultiBandImage& src, std::size_t out_w, std::size_t out_h,
                                     bool antialias = true) {
    if (out_w == 0 || out_h == 0) throw ParameterError("resize target must be non-empty");
    return detail::separable_resample(src, detail::cubic_axis(src.width(), out_w, antialias),
                                      detail::cubic_axis(src.height(), out_h, antialias), out_w, out_h);
}

inline MultiBandImage resize(const MultiBandImage& src, std::size_t out_w, std::size_t out_h, Interpolation mode) {
    return mode == Interpolation::Bilinear ? bilinear_resize(src, out_w, out_h) : bicubic_resize(src, out_w, out_h);
}

/// Resize by scale r to floor(rW) x floor(rH).
inline MultiBandImage upsample(const MultiBandImage& src, double r, Interpolation mode = Interpolation::Bilinear) {
    return resize(src, scaled_extent(src.width(), r), scaled_extent(src.height(), r), mode);
}

}  // namespace vbgs
