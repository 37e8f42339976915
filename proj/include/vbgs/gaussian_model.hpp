#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vbgs/errors.hpp"
#include "vbgs/image.hpp"

namespace vbgs {

/// Lower bound on the constrained standard deviations.
inline constexpr double kSigmaFloor = 1e-4;
/// |rho| is clamped to 1 - kRhoMargin.
inline constexpr double kRhoMargin = 1e-4;

struct Point2 {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Point2&) const = default;
};

/// Symmetric 2x2 matrix [[xx, xy], [xy, yy]].
struct SymMat2 {
    double xx = 0.0;
    double xy = 0.0;
    double yy = 0.0;

    double det() const { return xx * yy - xy * xy; }

    SymMat2 inverse() const {
        const double d = det();
        return {yy / d, -xy / d, xx / d};
    }

    double max_eigenvalue() const {
        const double mean = 0.5 * (xx + yy);
        const double half_diff = 0.5 * (xx - yy);
        return mean + std::sqrt(half_diff * half_diff + xy * xy);
    }

    double quadratic_form(double dx, double dy) const { return xx * dx * dx + 2.0 * xy * dx * dy + yy * dy * dy; }
};

/// Normalized [-1, 1] coordinate of pixel index i on an axis of n pixels.
inline double pixel_coord(std::size_t i, std::size_t n) {
    return -1.0 + (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n);
}

/// Pixel centers of a width x height grid, row-major.
inline std::vector<Point2> pixel_center_coords(std::size_t width, std::size_t height) {
    std::vector<Point2> pts;
    pts.reserve(width * height);
    for (std::size_t j = 0; j < height; ++j)
        for (std::size_t i = 0; i < width; ++i) pts.push_back({pixel_coord(i, width), pixel_coord(j, height)});
    return pts;
}

inline std::vector<Point2> pixel_center_coords(const ImageMeta& meta) {
    return pixel_center_coords(meta.width, meta.height);
}

enum class ParamClass { CenterX, CenterY, ScaleX, ScaleY, Correlation, Feature, Temperature };

inline constexpr std::array<ParamClass, 7> kParamClasses = {
    ParamClass::CenterX,     ParamClass::CenterY, ParamClass::ScaleX,     ParamClass::ScaleY,
    ParamClass::Correlation, ParamClass::Feature, ParamClass::Temperature};

inline std::string_view param_class_name(ParamClass c) {
    switch (c) {
        case ParamClass::CenterX: return "center_x";
        case ParamClass::CenterY: return "center_y";
        case ParamClass::ScaleX: return "scale_x";
        case ParamClass::ScaleY: return "scale_y";
        case ParamClass::Correlation: return "correlation";
        case ParamClass::Feature: return "feature";
        case ParamClass::Temperature: return "temperature";
    }
    return "unknown";
}

/// Per-Gaussian arrays in raw-parameter layout. Used both for the
/// unconstrained parameters and for gradients with respect to them.
struct ParamArrays {
    std::size_t count = 0;
    std::size_t bands = 0;
    std::vector<double> center_x;     // pre-tanh center offset
    std::vector<double> center_y;
    std::vector<double> scale_x;      // pre-softplus standard deviation
    std::vector<double> scale_y;
    std::vector<double> correlation;  // pre-tanh
    std::vector<double> feature;      // count x bands, pre-ReLU offsets from the base feature
    double temperature = 0.0;         // bilateral gamma, used as-is

    static ParamArrays zeros(std::size_t count, std::size_t bands) {
        ParamArrays p;
        p.count = count;
        p.bands = bands;
        p.center_x.assign(count, 0.0);
        p.center_y.assign(count, 0.0);
        p.scale_x.assign(count, 0.0);
        p.scale_y.assign(count, 0.0);
        p.correlation.assign(count, 0.0);
        p.feature.assign(count * bands, 0.0);
        return p;
    }

    std::span<double> array(ParamClass c) {
        switch (c) {
            case ParamClass::CenterX: return center_x;
            case ParamClass::CenterY: return center_y;
            case ParamClass::ScaleX: return scale_x;
            case ParamClass::ScaleY: return scale_y;
            case ParamClass::Correlation: return correlation;
            case ParamClass::Feature: return feature;
            case ParamClass::Temperature: return std::span<double>(&temperature, 1);
        }
        return {};
    }
    std::span<const double> array(ParamClass c) const { return const_cast<ParamArrays*>(this)->array(c); }

    /// Gaussian index owning element i of the array for class c.
    std::size_t owner(ParamClass c, std::size_t i) const {
        if (c == ParamClass::Feature) return i / bands;
        if (c == ParamClass::Temperature) return 0;
        return i;
    }

    bool shape_matches(const ParamArrays& other) const { return count == other.count && bands == other.bands; }

    void check_shape() const {
        if (center_x.size() != count || center_y.size() != count || scale_x.size() != count ||
            scale_y.size() != count || correlation.size() != count || feature.size() != count * bands)
            throw ShapeError("parameter arrays are inconsistent with count=" + std::to_string(count) +
                             " bands=" + std::to_string(bands));
    }
};

struct RawGaussianParams : ParamArrays {
    RawGaussianParams() = default;
    explicit RawGaussianParams(ParamArrays p) : ParamArrays(std::move(p)) {}

    static RawGaussianParams zeros(std::size_t count, std::size_t bands) {
        return RawGaussianParams(ParamArrays::zeros(count, bands));
    }

    /// Throws ParameterError naming the first non-finite entry.
    void validate() const {
        check_shape();
        for (ParamClass c : kParamClasses) {
            const auto values = array(c);
            for (std::size_t i = 0; i < values.size(); ++i)
                if (!std::isfinite(values[i]))
                    throw ParameterError("non-finite raw parameter " + std::string(param_class_name(c)) +
                                         " at Gaussian " + std::to_string(owner(c, i)));
        }
    }
};

inline double softplus(double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); }
inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

/// One constrained anisotropic Gaussian with its covariance caches.
struct Gaussian {
    Point2 center{};
    double sigma_x = 1.0;
    double sigma_y = 1.0;
    double rho = 0.0;
    SymMat2 cov{};
    SymMat2 inv{};
    double det = 1.0;
    double lambda_max = 1.0;
    double norm = 0.0;  // 1 / (2 pi sqrt(det))

    static Gaussian make(Point2 center, double sigma_x, double sigma_y, double rho) {
        if (!(sigma_x > 0.0) || !(sigma_y > 0.0) || !(std::abs(rho) < 1.0))
            throw ParameterError("Gaussian needs positive sigmas and |rho| < 1");
        Gaussian g;
        g.center = center;
        g.sigma_x = sigma_x;
        g.sigma_y = sigma_y;
        g.rho = rho;
        const double sxy = sigma_x * sigma_y;
        const double one_minus = 1.0 - rho * rho;
        g.cov = {sigma_x * sigma_x, rho * sxy, sigma_y * sigma_y};
        g.det = sxy * sxy * one_minus;
        g.inv = {1.0 / (sigma_x * sigma_x * one_minus), -rho / (sxy * one_minus),
                 1.0 / (sigma_y * sigma_y * one_minus)};
        g.lambda_max = g.cov.max_eigenvalue();
        g.norm = 1.0 / (2.0 * std::numbers::pi * std::sqrt(g.det));
        return g;
    }

    /// Gaussian from an arbitrary SPD covariance. sigma/rho are derived.
    static Gaussian from_covariance(Point2 center, const SymMat2& cov) {
        if (!(cov.xx > 0.0) || !(cov.yy > 0.0) || !(cov.det() > 0.0))
            throw ParameterError("covariance is not positive definite");
        Gaussian g;
        g.center = center;
        g.sigma_x = std::sqrt(cov.xx);
        g.sigma_y = std::sqrt(cov.yy);
        g.rho = cov.xy / (g.sigma_x * g.sigma_y);
        g.cov = cov;
        g.det = cov.det();
        g.inv = cov.inverse();
        g.lambda_max = cov.max_eigenvalue();
        g.norm = 1.0 / (2.0 * std::numbers::pi * std::sqrt(g.det));
        return g;
    }
};

/// Squared Mahalanobis distance; clamped at zero against round-off.
inline double mahalanobis_sq(const SymMat2& inv, Point2 center, Point2 p) {
    const double dx = p.x - center.x;
    const double dy = p.y - center.y;
    return std::max(0.0, inv.quadratic_form(dx, dy));
}

inline double mahalanobis_sq(const Gaussian& g, Point2 p) { return mahalanobis_sq(g.inv, g.center, p); }

inline double mahalanobis(const Gaussian& g, Point2 p) { return std::sqrt(mahalanobis_sq(g, p)); }

/// Normalized kernel value exp(-d^2/2) / (2 pi |Sigma|^(1/2)).
inline double kernel(const Gaussian& g, Point2 p) { return g.norm * std::exp(-0.5 * mahalanobis_sq(g, p)); }

/// The fitted continuous representation. Immutable after construction.
class GaussianSet {
public:
    GaussianSet() = default;

    GaussianSet(std::vector<Gaussian> gaussians, std::vector<double> features, std::size_t bands, double gamma,
                MultiBandImage base = {})
        : gaussians_(std::move(gaussians)), features_(std::move(features)), bands_(bands), gamma_(gamma),
          base_(std::move(base)) {
        if (bands_ == 0) throw ShapeError("Gaussian set needs at least one band");
        if (features_.size() != gaussians_.size() * bands_)
            throw ShapeError("feature array does not match Gaussian count x bands");
        if (!base_.empty() && (base_.bands() != bands_ || base_.pixel_count() != gaussians_.size()))
            throw ShapeError("base feature grid does not match the Gaussian set");
        if (!std::isfinite(gamma_)) throw ParameterError("non-finite bilateral temperature");
        for (double f : features_)
            if (!std::isfinite(f)) throw ParameterError("non-finite Gaussian feature");
    }

    std::size_t size() const { return gaussians_.size(); }
    bool empty() const { return gaussians_.empty(); }
    std::size_t bands() const { return bands_; }
    double gamma() const { return gamma_; }

    const Gaussian& gaussian(std::size_t n) const { return gaussians_[n]; }
    std::span<const Gaussian> gaussians() const { return gaussians_; }

    std::span<const double> feature(std::size_t n) const {
        return std::span<const double>(features_).subspan(n * bands_, bands_);
    }
    std::span<const double> features() const { return features_; }

    /// Source image the set was initialized from (may be empty for hand-built sets).
    const MultiBandImage& base() const { return base_; }

    /// Metadata of the output images: source meta when known, else a unit range.
    ValueRange value_range() const { return base_.empty() ? ValueRange{} : base_.meta().range; }

private:
    std::vector<Gaussian> gaussians_;
    std::vector<double> features_;
    std::size_t bands_ = 0;
    double gamma_ = 0.0;
    MultiBandImage base_;
};

/// Maps raw parameters through the activation chain: tanh center offsets,
/// floored softplus scales, clamped tanh correlation, ReLU features.
inline GaussianSet constrain(const RawGaussianParams& raw, const MultiBandImage& source) {
    source.meta().validate();
    raw.validate();
    const std::size_t n_pix = source.pixel_count();
    const std::size_t bands = source.bands();
    if (raw.count != n_pix || raw.bands != bands)
        throw ShapeError("raw parameters hold " + std::to_string(raw.count) + "x" + std::to_string(raw.bands) +
                         " entries, source needs " + std::to_string(n_pix) + "x" + std::to_string(bands));

    const double rho_limit = 1.0 - kRhoMargin;
    std::vector<Gaussian> gaussians;
    gaussians.reserve(n_pix);
    std::vector<double> features(n_pix * bands);
    const std::size_t w = source.width();
    for (std::size_t n = 0; n < n_pix; ++n) {
        const Point2 init{pixel_coord(n % w, w), pixel_coord(n / w, source.height())};
        const Point2 center{init.x + std::tanh(raw.center_x[n]), init.y + std::tanh(raw.center_y[n])};
        const double sx = std::max(softplus(raw.scale_x[n]), kSigmaFloor);
        const double sy = std::max(softplus(raw.scale_y[n]), kSigmaFloor);
        const double rho = std::clamp(std::tanh(raw.correlation[n]), -rho_limit, rho_limit);
        gaussians.push_back(Gaussian::make(center, sx, sy, rho));
        for (std::size_t b = 0; b < bands; ++b)
            features[n * bands + b] = std::max(0.0, source.value(b, n) + raw.feature[n * bands + b]);
    }
    return GaussianSet(std::move(gaussians), std::move(features), bands, raw.temperature, source);
}

/// Feature-weighted contribution F * kernel at p, written into out.
inline void contribution(const GaussianSet& gs, std::size_t n, Point2 p, std::span<double> out) {
    const double k = kernel(gs.gaussian(n), p);
    const auto f = gs.feature(n);
    for (std::size_t b = 0; b < f.size(); ++b) out[b] = f[b] * k;
}

inline std::vector<double> contribution(const Gaussian& g, std::span<const double> feature, Point2 p) {
    const double k = kernel(g, p);
    std::vector<double> out(feature.size());
    for (std::size_t b = 0; b < feature.size(); ++b) out[b] = feature[b] * k;
    return out;
}

}  // namespace vbgs
