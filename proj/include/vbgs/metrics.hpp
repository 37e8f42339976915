#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "vbgs/errors.hpp"
#include "vbgs/image.hpp"

namespace vbgs {

struct MetricReport {
    double psnr = 0.0;  // dB, +inf for identical images
    double ssim = 0.0;
    double sam = 0.0;   // radians
    std::vector<double> band_psnr;
};

inline double mse(const MultiBandImage& a, const MultiBandImage& b) {
    require_same_shape(a, b, "mse");
    const auto da = a.data();
    const auto db = b.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < da.size(); ++i) {
        const double d = da[i] - db[i];
        acc += d * d;
    }
    return acc / static_cast<double>(da.size());
}

inline double psnr_from_mse(double m, double peak) {
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / m);
}

/// PSNR over the whole band stack.
inline double psnr(const MultiBandImage& a, const MultiBandImage& b, double peak) {
    return psnr_from_mse(mse(a, b), peak);
}

inline double psnr(const MultiBandImage& a, const MultiBandImage& b) { return psnr(a, b, a.meta().range.width()); }

inline std::vector<double> band_psnr(const MultiBandImage& a, const MultiBandImage& b, double peak) {
    require_same_shape(a, b, "band_psnr");
    std::vector<double> out;
    for (std::size_t band = 0; band < a.bands(); ++band) {
        const auto x = a.band(band);
        const auto y = b.band(band);
        double acc = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) acc += (x[i] - y[i]) * (x[i] - y[i]);
        out.push_back(psnr_from_mse(acc / static_cast<double>(x.size()), peak));
    }
    return out;
}

namespace detail {

inline std::vector<double> ssim_window() {
    constexpr int kSize = 11;
    constexpr double kSigma = 1.5;
    std::vector<double> w(kSize * kSize);
    double total = 0.0;
    for (int y = 0; y < kSize; ++y)
        for (int x = 0; x < kSize; ++x) {
            const double dx = x - kSize / 2, dy = y - kSize / 2;
            w[y * kSize + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * kSigma * kSigma));
            total += w[y * kSize + x];
        }
    for (double& v : w) v /= total;
    return w;
}

}  // namespace detail

/// Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, averaged over valid window positions and then over bands.
inline double ssim(const MultiBandImage& a, const MultiBandImage& b) {
    require_same_shape(a, b, "ssim");
    constexpr std::size_t kSize = 11;
    if (a.width() < kSize || a.height() < kSize) throw ShapeError("ssim needs images of at least 11x11 pixels");
    const double range = a.meta().range.width();
    const double c1 = (0.01 * range) * (0.01 * range);
    const double c2 = (0.03 * range) * (0.03 * range);
    const auto window = detail::ssim_window();
    const std::size_t out_w = a.width() - kSize + 1, out_h = a.height() - kSize + 1;
    double total = 0.0;
    for (std::size_t band = 0; band < a.bands(); ++band) {
        double band_sum = 0.0;
        for (std::size_t r = 0; r < out_h; ++r)
            for (std::size_t c = 0; c < out_w; ++c) {
                double mu_a = 0, mu_b = 0, saa = 0, sbb = 0, sab = 0;
                for (std::size_t y = 0; y < kSize; ++y)
                    for (std::size_t x = 0; x < kSize; ++x) {
                        const double w = window[y * kSize + x];
                        const double va = a.at(band, r + y, c + x), vb = b.at(band, r + y, c + x);
                        mu_a += w * va;
                        mu_b += w * vb;
                        saa += w * va * va;
                        sbb += w * vb * vb;
                        sab += w * va * vb;
                    }
                const double var_a = saa - mu_a * mu_a;
                const double var_b = sbb - mu_b * mu_b;
                const double cov = sab - mu_a * mu_b;
                band_sum += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
                            ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
            }
        total += band_sum / static_cast<double>(out_w * out_h);
    }
    return total / static_cast<double>(a.bands());
}

/// Mean spectral angle in radians; pixels with a (near) zero spectrum count as 0.
/// Uses 2 atan2(|u - v|, |u + v|) on the unit vectors, which equals the
/// arccos of the normalized dot product without its loss of precision near 0.
inline double sam(const MultiBandImage& a, const MultiBandImage& b) {
    require_same_shape(a, b, "sam");
    double total = 0.0;
    for (std::size_t px = 0; px < a.pixel_count(); ++px) {
        double na = 0.0, nb = 0.0;
        for (std::size_t band = 0; band < a.bands(); ++band) {
            na += a.value(band, px) * a.value(band, px);
            nb += b.value(band, px) * b.value(band, px);
        }
        na = std::sqrt(na);
        nb = std::sqrt(nb);
        if (na < 1e-12 || nb < 1e-12) continue;
        double diff = 0.0, sum = 0.0;
        for (std::size_t band = 0; band < a.bands(); ++band) {
            const double u = a.value(band, px) / na, v = b.value(band, px) / nb;
            diff += (u - v) * (u - v);
            sum += (u + v) * (u + v);
        }
        total += 2.0 * std::atan2(std::sqrt(diff), std::sqrt(sum));
    }
    return total / static_cast<double>(a.pixel_count());
}

/// SSIM is NaN when either side is below the 11x11 window.
inline MetricReport evaluate(const MultiBandImage& pred, const MultiBandImage& truth) {
    require_same_shape(pred, truth, "evaluate");
    const double peak = truth.meta().range.width();
    MetricReport r;
    r.psnr = psnr(pred, truth, peak);
    r.band_psnr = band_psnr(pred, truth, peak);
    r.ssim = (pred.width() >= 11 && pred.height() >= 11) ? ssim(pred, truth)
                                                          : std::numeric_limits<double>::quiet_NaN();
    r.sam = sam(pred, truth);
    return r;
}

inline std::string format_metric(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

inline void write_report_csv(std::ostream& os, const MetricReport& r) {
    os << "metric,band,value\n";
    os << "psnr,all," << format_metric(r.psnr) << '\n';
    os << "ssim,all," << format_metric(r.ssim) << '\n';
    os << "sam,all," << format_metric(r.sam) << '\n';
    for (std::size_t b = 0; b < r.band_psnr.size(); ++b) os << "psnr," << b << ',' << format_metric(r.band_psnr[b]) << '\n';
}

inline void write_report_table(std::ostream& os, const MetricReport& r) {
    os << std::left << std::setw(8) << "metric" << std::right << std::setw(14) << "value" << '\n';
    os << std::left << std::setw(8) << "PSNR" << std::right << std::setw(14) << std::fixed << std::setprecision(4)
       << r.psnr << " dB\n";
    os << std::left << std::setw(8) << "SSIM" << std::right << std::setw(14) << r.ssim << '\n';
    os << std::left << std::setw(8) << "SAM" << std::right << std::setw(14) << r.sam << " rad\n";
    os << std::defaultfloat;
}

}  // namespace vbgs
