#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "vbgs/errors.hpp"
#include "vbgs/gaussian_model.hpp"
#include "vbgs/image.hpp"
#include "vbgs/parallel.hpp"
#include "vbgs/resample.hpp"
#include "vbgs/selection.hpp"

namespace vbgs {

/// Sum over every Gaussian.
struct DirectStrategy {};

/// Contributions beyond Mahalanobis distance `cutoff` are dropped.
struct RasterStrategy {
    double cutoff = 3.0;
};

/// Top-k selection with reference-aware bilateral weights.
struct VbgsStrategy {
    std::size_t k = 16;
};

using Strategy = std::variant<DirectStrategy, RasterStrategy, VbgsStrategy>;

struct ScaleTarget {
    double scale = 1.0;
};

struct RenderPlan {
    std::variant<ScaleTarget, std::vector<Point2>> target = ScaleTarget{};
    Strategy strategy = DirectStrategy{};
    /// Reference spectra at target resolution; required for vbgs.
    std::optional<MultiBandImage> reference;

    static RenderPlan at_scale(double r, Strategy s, std::optional<MultiBandImage> ref = std::nullopt) {
        return {ScaleTarget{r}, s, std::move(ref)};
    }
    static RenderPlan at_points(std::vector<Point2> pts, Strategy s, std::optional<MultiBandImage> ref = std::nullopt) {
        return {std::move(pts), s, std::move(ref)};
    }
};

/// Output grid extent of a plan. Point lists render as a 1-row image.
struct TargetGrid {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<Point2> points;
};

inline TargetGrid target_grid(const RenderPlan& plan, const ImageMeta& source) {
    TargetGrid grid;
    if (const auto* s = std::get_if<ScaleTarget>(&plan.target)) {
        grid.width = scaled_extent(source.width, s->scale);
        grid.height = scaled_extent(source.height, s->scale);
        grid.points = pixel_center_coords(grid.width, grid.height);
    } else {
        grid.points = std::get<std::vector<Point2>>(plan.target);
        if (grid.points.empty()) throw ConfigError("render plan has an empty coordinate list");
        grid.width = grid.points.size();
        grid.height = 1;
    }
    return grid;
}

/// Grid the set's source image lives on; a 1x1 unit grid for hand-built sets.
inline ImageMeta source_meta(const GaussianSet& gs) {
    if (!gs.base().empty()) return gs.base().meta();
    return ImageMeta{1, 1, gs.bands(), {}};
}

/// Bilinear (default) upsampling of the source image to a target extent.
inline MultiBandImage make_reference(const MultiBandImage& source, std::size_t width, std::size_t height,
                                     Interpolation mode = Interpolation::Bilinear) {
    return resize(source, width, height, mode);
}

namespace detail {

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    if (na < 1e-12 || nb < 1e-12) return 0.0;
    return dot / (na * nb);
}

inline void direct_point(const GaussianSet& gs, Point2 p, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t n = 0; n < gs.size(); ++n) {
        const double k = kernel(gs.gaussian(n), p);
        const auto f = gs.feature(n);
        for (std::size_t b = 0; b < out.size(); ++b) out[b] += f[b] * k;
    }
}

inline void raster_accumulate(const GaussianSet& gs, std::size_t n, Point2 p, double cutoff, std::span<double> out) {
    const Gaussian& g = gs.gaussian(n);
    if (!(mahalanobis(g, p) <= cutoff)) return;
    const double k = kernel(g, p);
    const auto f = gs.feature(n);
    for (std::size_t b = 0; b < out.size(); ++b) out[b] += f[b] * k;
}

inline void raster_point(const GaussianSet& gs, Point2 p, double cutoff, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t n = 0; n < gs.size(); ++n) raster_accumulate(gs, n, p, cutoff, out);
}

}  // namespace detail

/// Bilateral aggregation over a fixed selection: cosine similarity to the
/// reference, weights exp(gamma * s), normalized weighted sum of contributions.
inline void vbgs_point(const GaussianSet& gs, const SelectionResult& sel, Point2 p,
                       std::span<const double> reference, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    double weight_sum = 0.0;
    for (std::size_t n : sel.indices) {
        const auto f = gs.feature(n);
        const double w = std::exp(gs.gamma() * detail::cosine_similarity(f, reference));
        const double wk = w * kernel(gs.gaussian(n), p);
        for (std::size_t b = 0; b < out.size(); ++b) out[b] += wk * f[b];
        weight_sum += w;
    }
    if (weight_sum > 0.0)
        for (double& v : out) v /= weight_sum;
}

inline MultiBandImage render_direct(const GaussianSet& gs, const RenderPlan& plan) {
    const TargetGrid grid = target_grid(plan, source_meta(gs));
    MultiBandImage out(ImageMeta{grid.width, grid.height, gs.bands(), gs.value_range()});
    parallel_for(grid.points.size(), [&](std::size_t px) {
        std::vector<double> v(gs.bands());
        detail::direct_point(gs, grid.points[px], v);
        out.set_spectrum(px, v);
    });
    return out;
}

/// Bins each Gaussian's cutoff ellipse bounding box into 16x16 pixel tiles
/// (lists stay in ascending Gaussian order), then evaluates each pixel over
/// its tile list. Identical accumulation order to render_direct.
inline MultiBandImage render_rasterized(const GaussianSet& gs, const RenderPlan& plan) {
    const auto* strat = std::get_if<RasterStrategy>(&plan.strategy);
    const double cutoff = strat ? strat->cutoff : RasterStrategy{}.cutoff;
    if (!(cutoff >= 0.0)) throw ConfigError("raster cutoff must be non-negative");
    const TargetGrid grid = target_grid(plan, source_meta(gs));
    MultiBandImage out(ImageMeta{grid.width, grid.height, gs.bands(), gs.value_range()});

    if (std::holds_alternative<std::vector<Point2>>(plan.target)) {
        parallel_for(grid.points.size(), [&](std::size_t px) {
            std::vector<double> v(gs.bands());
            detail::raster_point(gs, grid.points[px], cutoff, v);
            out.set_spectrum(px, v);
        });
        return out;
    }

    constexpr std::size_t kTile = 16;
    const std::size_t tiles_x = (grid.width + kTile - 1) / kTile;
    const std::size_t tiles_y = (grid.height + kTile - 1) / kTile;
    std::vector<std::vector<std::size_t>> bins(tiles_x * tiles_y);
    const double w = static_cast<double>(grid.width);
    const double h = static_cast<double>(grid.height);
    // Continuous pixel index of normalized coordinate v on an axis of n pixels.
    auto to_pixel = [](double v, double n) { return ((v + 1.0) * n - 1.0) * 0.5; };
    for (std::size_t n = 0; n < gs.size(); ++n) {
        const Gaussian& g = gs.gaussian(n);
        std::size_t c0 = 0, c1 = grid.width - 1, r0 = 0, r1 = grid.height - 1;
        if (std::isfinite(cutoff)) {
            const double ext_x = cutoff * std::sqrt(g.cov.xx) * (1.0 + 1e-9) + 1e-12;
            const double ext_y = cutoff * std::sqrt(g.cov.yy) * (1.0 + 1e-9) + 1e-12;
            const double lo_x = std::ceil(to_pixel(g.center.x - ext_x, w));
            const double hi_x = std::floor(to_pixel(g.center.x + ext_x, w));
            const double lo_y = std::ceil(to_pixel(g.center.y - ext_y, h));
            const double hi_y = std::floor(to_pixel(g.center.y + ext_y, h));
            if (hi_x < 0.0 || hi_y < 0.0 || lo_x > w - 1.0 || lo_y > h - 1.0) continue;
            c0 = static_cast<std::size_t>(std::max(lo_x, 0.0));
            c1 = static_cast<std::size_t>(std::min(hi_x, w - 1.0));
            r0 = static_cast<std::size_t>(std::max(lo_y, 0.0));
            r1 = static_cast<std::size_t>(std::min(hi_y, h - 1.0));
            if (c0 > c1 || r0 > r1) continue;
        }
        for (std::size_t ty = r0 / kTile; ty <= r1 / kTile; ++ty)
            for (std::size_t tx = c0 / kTile; tx <= c1 / kTile; ++tx) bins[ty * tiles_x + tx].push_back(n);
    }

    parallel_for(bins.size(), [&](std::size_t t) {
        const std::size_t tx = t % tiles_x, ty = t / tiles_x;
        std::vector<double> v(gs.bands());
        for (std::size_t row = ty * kTile; row < std::min(grid.height, (ty + 1) * kTile); ++row)
            for (std::size_t col = tx * kTile; col < std::min(grid.width, (tx + 1) * kTile); ++col) {
                const std::size_t px = row * grid.width + col;
                std::fill(v.begin(), v.end(), 0.0);
                for (std::size_t n : bins[t]) detail::raster_accumulate(gs, n, grid.points[px], cutoff, v);
                out.set_spectrum(px, v);
            }
    }, 1);
    return out;
}

inline void check_reference(const RenderPlan& plan, const TargetGrid& grid, std::size_t bands) {
    if (!plan.reference) throw ConfigError("vbgs rendering requires a reference image at target resolution");
    const MultiBandImage& ref = *plan.reference;
    if (ref.width() != grid.width || ref.height() != grid.height || ref.bands() != bands)
        throw ShapeError("reference image is " + std::to_string(ref.width()) + "x" + std::to_string(ref.height()) +
                         "x" + std::to_string(ref.bands()) + ", target needs " + std::to_string(grid.width) + "x" +
                         std::to_string(grid.height) + "x" + std::to_string(bands));
}

/// VBGS render. With a null index, selection runs the brute-force scan.
inline MultiBandImage render_vbgs(const GaussianSet& gs, const GaussianGridIndex* index, const RenderPlan& plan) {
    const auto* strat = std::get_if<VbgsStrategy>(&plan.strategy);
    if (!strat) throw ConfigError("render_vbgs called with a non-vbgs strategy");
    if (strat->k == 0) throw ConfigError("vbgs k must be at least 1");
    const TargetGrid grid = target_grid(plan, source_meta(gs));
    check_reference(plan, grid, gs.bands());
    const MultiBandImage& ref = *plan.reference;
    MultiBandImage out(ImageMeta{grid.width, grid.height, gs.bands(), gs.value_range()});
    parallel_for(grid.points.size(), [&](std::size_t px) {
        const Point2 p = grid.points[px];
        const SelectionResult sel = index ? index->top_k(gs, p, strat->k) : brute_force_top_k(gs, p, strat->k);
        thread_local std::vector<double> r, v;
        r.resize(gs.bands());
        v.resize(gs.bands());
        ref.spectrum(px, r);
        vbgs_point(gs, sel, p, r, v);
        out.set_spectrum(px, v);
    });
    return out;
}

inline MultiBandImage render_vbgs(const GaussianSet& gs, const GaussianGridIndex& index, const RenderPlan& plan) {
    return render_vbgs(gs, &index, plan);
}

/// Dispatches on the plan's strategy. `index` is only used by vbgs.
inline MultiBandImage render(const GaussianSet& gs, const RenderPlan& plan, const GaussianGridIndex* index = nullptr) {
    if (std::holds_alternative<DirectStrategy>(plan.strategy)) return render_direct(gs, plan);
    if (std::holds_alternative<RasterStrategy>(plan.strategy)) return render_rasterized(gs, plan);
    return render_vbgs(gs, index, plan);
}

/// Single-point evaluation; the per-pixel body of the matching render.
inline std::vector<double> eval_point(const GaussianSet& gs, const GaussianGridIndex* index, Point2 p,
                                      const Strategy& strategy, std::span<const double> reference_spectrum = {}) {
    std::vector<double> out(gs.bands());
    if (std::holds_alternative<DirectStrategy>(strategy)) {
        detail::direct_point(gs, p, out);
    } else if (const auto* r = std::get_if<RasterStrategy>(&strategy)) {
        detail::raster_point(gs, p, r->cutoff, out);
    } else {
        const auto& v = std::get<VbgsStrategy>(strategy);
        if (reference_spectrum.size() != gs.bands())
            throw ConfigError("vbgs evaluation requires a reference spectrum with one value per band");
        const SelectionResult sel = index ? index->top_k(gs, p, v.k) : brute_force_top_k(gs, p, v.k);
        vbgs_point(gs, sel, p, reference_spectrum, out);
    }
    return out;
}

}  // namespace vbgs
