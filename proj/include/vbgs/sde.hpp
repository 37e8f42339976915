#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "vbgs/errors.hpp"
#include "vbgs/image.hpp"
#include "vbgs/parallel.hpp"
#include "vbgs/resample.hpp"

namespace vbgs {

/// Two affine maps with a ReLU between them: out = W2 relu(W1 x + b1) + b2.
/// Weights are row-major (rows = outputs).
struct Mlp2 {
    std::size_t in = 0;
    std::size_t hidden = 0;
    std::size_t out = 0;
    std::vector<double> w1, b1, w2, b2;

    static Mlp2 zeros(std::size_t in, std::size_t hidden, std::size_t out) {
        Mlp2 m{in, hidden, out, {}, {}, {}, {}};
        m.w1.assign(hidden * in, 0.0);
        m.b1.assign(hidden, 0.0);
        m.w2.assign(out * hidden, 0.0);
        m.b2.assign(out, 0.0);
        return m;
    }

    bool consistent() const {
        return in > 0 && hidden > 0 && out > 0 && w1.size() == hidden * in && b1.size() == hidden &&
               w2.size() == out * hidden && b2.size() == out;
    }

    /// `x` and `y` are strided views so the same MLP can run along either
    /// axis of a token x channel patch.
    void apply(const double* x, std::size_t x_stride, double* y, std::size_t y_stride,
               std::vector<double>& hidden_buf) const {
        hidden_buf.resize(hidden);
        for (std::size_t h = 0; h < hidden; ++h) {
            double acc = b1[h];
            const double* row = w1.data() + h * in;
            for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i * x_stride];
            hidden_buf[h] = acc > 0.0 ? acc : 0.0;
        }
        for (std::size_t o = 0; o < out; ++o) {
            double acc = b2[o];
            const double* row = w2.data() + o * hidden;
            for (std::size_t h = 0; h < hidden; ++h) acc += row[h] * hidden_buf[h];
            y[o * y_stride] = acc;
        }
    }
};

struct SdeDims {
    std::size_t channels = 0;
    std::size_t patch = 5;
    std::size_t hidden = 64;
};

/// Two rounds of token mixing (over the patch^2 positions, shared across
/// channels) followed by channel mixing (shared across positions), then a
/// fuse MLP from the flattened patch to one spectrum.
struct SdeWeights {
    SdeDims dims;
    Mlp2 spatial[2];
    Mlp2 spectral[2];
    Mlp2 fuse;

    std::size_t tokens() const { return dims.patch * dims.patch; }

    /// Shape audit; throws ShapeError describing the first mismatch.
    void validate() const {
        if (dims.patch == 0 || dims.patch % 2 == 0) throw ShapeError("patch size must be a positive odd number");
        if (dims.channels == 0 || dims.hidden == 0) throw ShapeError("SDE channels and hidden width must be positive");
        const std::size_t t = tokens(), c = dims.channels, h = dims.hidden;
        for (int l = 0; l < 2; ++l) {
            const std::string tag = std::to_string(l + 1);
            if (!spatial[l].consistent() || spatial[l].in != t || spatial[l].out != t || spatial[l].hidden != h)
                throw ShapeError("spatial" + tag + " MLP must map " + std::to_string(t) + " tokens via " +
                                 std::to_string(h) + " hidden units");
            if (!spectral[l].consistent() || spectral[l].in != c || spectral[l].out != c || spectral[l].hidden != h)
                throw ShapeError("spectral" + tag + " MLP must map " + std::to_string(c) + " channels via " +
                                 std::to_string(h) + " hidden units");
        }
        if (!fuse.consistent() || fuse.in != t * c || fuse.out != c || fuse.hidden != h)
            throw ShapeError("fuse MLP must map " + std::to_string(t * c) + " inputs to " + std::to_string(c));
        for (const Mlp2* m : {&spatial[0], &spatial[1], &spectral[0], &spectral[1], &fuse})
            for (const auto* v : {&m->w1, &m->b1, &m->w2, &m->b2})
                for (double x : *v)
                    if (!std::isfinite(x)) throw ParameterError("SDE weights contain non-finite values");
    }

    static SdeWeights zeros(SdeDims dims) {
        SdeWeights w;
        w.dims = dims;
        const std::size_t t = dims.patch * dims.patch;
        for (int l = 0; l < 2; ++l) {
            w.spatial[l] = Mlp2::zeros(t, dims.hidden, t);
            w.spectral[l] = Mlp2::zeros(dims.channels, dims.hidden, dims.channels);
        }
        w.fuse = Mlp2::zeros(t * dims.channels, dims.hidden, dims.channels);
        return w;
    }
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias.
inline SdeWeights sde_random_init(std::uint64_t seed, SdeDims dims) {
    SdeWeights w = SdeWeights::zeros(dims);
    std::mt19937_64 rng(seed);
    auto fill = [&](Mlp2& m) {
        const double a1 = 1.0 / std::sqrt(static_cast<double>(m.in));
        const double a2 = 1.0 / std::sqrt(static_cast<double>(m.hidden));
        std::uniform_real_distribution<double> d1(-a1, a1), d2(-a2, a2);
        for (double& v : m.w1) v = d1(rng);
        for (double& v : m.b1) v = d1(rng);
        for (double& v : m.w2) v = d2(rng);
        for (double& v : m.b2) v = d2(rng);
    };
    for (int l = 0; l < 2; ++l) {
        fill(w.spatial[l]);
        fill(w.spectral[l]);
    }
    fill(w.fuse);
    return w;
}

/// Refines one pixel from its P x P patch (token-major, channels inner).
inline void sde_patch(const SdeWeights& w, std::vector<double>& patch, std::span<double> out,
                      std::vector<double>& tmp, std::vector<double>& hidden) {
    const std::size_t t = w.tokens(), c = w.dims.channels;
    tmp.resize(t * c);
    for (int l = 0; l < 2; ++l) {
        for (std::size_t ch = 0; ch < c; ++ch) w.spatial[l].apply(patch.data() + ch, c, tmp.data() + ch, c, hidden);
        for (std::size_t tok = 0; tok < t; ++tok)
            w.spectral[l].apply(tmp.data() + tok * c, 1, patch.data() + tok * c, 1, hidden);
    }
    w.fuse.apply(patch.data(), 1, out.data(), 1, hidden);
}

/// Upsample (bilinear) to floor(rW) x floor(rH), then refine every pixel
/// from its replicate-padded P x P neighbourhood.
inline MultiBandImage sde_forward(const MultiBandImage& feature, double scale, const SdeWeights& weights) {
    feature.validate();
    weights.validate();
    if (feature.bands() != weights.dims.channels)
        throw ShapeError("SDE weights expect " + std::to_string(weights.dims.channels) + " channels, feature has " +
                         std::to_string(feature.bands()));
    const MultiBandImage up = upsample(feature, scale, Interpolation::Bilinear);
    MultiBandImage out(up.meta());
    const auto w = static_cast<std::ptrdiff_t>(up.width()), h = static_cast<std::ptrdiff_t>(up.height());
    const auto half = static_cast<std::ptrdiff_t>(weights.dims.patch / 2);
    const std::size_t c = weights.dims.channels;
    parallel_for(up.pixel_count(), [&](std::size_t px) {
        const auto x = static_cast<std::ptrdiff_t>(px) % w, y = static_cast<std::ptrdiff_t>(px) / w;
        std::vector<double> patch(weights.tokens() * c), tmp, hidden, result(c);
        std::size_t tok = 0;
        for (std::ptrdiff_t dy = -half; dy <= half; ++dy)
            for (std::ptrdiff_t dx = -half; dx <= half; ++dx, ++tok) {
                const auto sx = static_cast<std::size_t>(std::clamp(x + dx, std::ptrdiff_t{0}, w - 1));
                const auto sy = static_cast<std::size_t>(std::clamp(y + dy, std::ptrdiff_t{0}, h - 1));
                for (std::size_t ch = 0; ch < c; ++ch) patch[tok * c + ch] = up.at(ch, sy, sx);
            }
        sde_patch(weights, patch, result, tmp, hidden);
        out.set_spectrum(px, result);
    });
    return out;
}

}  // namespace vbgs
