#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>

#include "vbgs/errors.hpp"
#include "vbgs/image.hpp"
#include "vbgs/resample.hpp"

namespace vbgs {

struct DegradeOptions {
    double scale = 4.0;
    /// Noise standard deviation in units of `noise_scale` (10 on the 8-bit scale by default).
    double noise_sigma = 0.0;
    double noise_scale = 255.0;
    std::uint64_t seed = 0;
    bool clamp = true;
};

/// Low-resolution synthesis: antialiased bicubic downsample by `scale` to
/// floor(W / r) x floor(H / r), plus i.i.d. Gaussian noise with standard
/// deviation noise_sigma / noise_scale times the value range width, then
/// clamping to the value range.
inline MultiBandImage synth_degrade(const MultiBandImage& hr, const DegradeOptions& opt) {
    hr.validate();
    if (!(opt.scale > 1.0) || !std::isfinite(opt.scale)) throw ParameterError("degradation scale must exceed 1");
    if (!(opt.noise_sigma >= 0.0) || !(opt.noise_scale > 0.0)) throw ParameterError("noise level must be non-negative");
    const std::size_t w = scaled_extent(hr.width(), 1.0 / opt.scale);
    const std::size_t h = scaled_extent(hr.height(), 1.0 / opt.scale);
    MultiBandImage lr = bicubic_resize(hr, w, h, true);
    if (opt.noise_sigma > 0.0) {
        const ValueRange range = hr.meta().range;
        std::mt19937_64 rng(opt.seed);
        std::normal_distribution<double> noise(0.0, opt.noise_sigma / opt.noise_scale * range.width());
        for (double& v : lr.data()) v += noise(rng);
    }
    if (opt.clamp) {
        const ValueRange range = hr.meta().range;
        for (double& v : lr.data()) v = std::clamp(v, range.lo, range.hi);
    }
    return lr;
}

}  // namespace vbgs
