#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "vbgs/errors.hpp"
#include "vbgs/metrics.hpp"
#include "vbgs/render.hpp"
#include "vbgs/selection.hpp"

namespace vbgs {

/// Parsed strategy token: direct | raster[:RHO] | vbgs:K | vbgs-brute:K.
struct StrategySpec {
    std::string name;
    Strategy strategy;
    bool brute_force = false;
};

inline StrategySpec parse_strategy(const std::string& text) {
    const auto colon = text.find(':');
    const std::string kind = text.substr(0, colon);
    const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
    auto number = [&](double fallback) {
        if (arg.empty()) return fallback;
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(arg, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != arg.size()) throw ConfigError("bad strategy argument in '" + text + "'");
        return v;
    };
    if (kind == "direct" && arg.empty()) return {text, DirectStrategy{}, false};
    if (kind == "raster") {
        const double rho = (arg == "inf") ? std::numeric_limits<double>::infinity() : number(3.0);
        if (!(rho >= 0.0)) throw ConfigError("raster cutoff must be non-negative in '" + text + "'");
        return {text, RasterStrategy{rho}, false};
    }
    if (kind == "vbgs" || kind == "vbgs-brute") {
        const double k = number(16.0);
        if (!(k >= 1.0) || k != std::floor(k)) throw ConfigError("vbgs k must be a positive integer in '" + text + "'");
        return {text, VbgsStrategy{static_cast<std::size_t>(k)}, kind == "vbgs-brute"};
    }
    throw ConfigError("unknown strategy '" + text + "' (expected direct, raster:RHO, vbgs:K or vbgs-brute:K)");
}

struct BenchRow {
    double scale = 0.0;
    std::string strategy;
    std::size_t width = 0;
    std::size_t height = 0;
    double seconds = 0.0;
    double pixels_per_second = 0.0;
    double max_abs_dev = 0.0;  // against direct aggregation at the same scale
    double rms_dev = 0.0;
};

/// Times every (scale, strategy) pair. vbgs references come from bilinear
/// upsampling of the set's base image; the index build is included in the
/// indexed vbgs timing.
inline std::vector<BenchRow> bench(const GaussianSet& gs, const std::vector<double>& scales,
                                   const std::vector<StrategySpec>& strategies, bool with_deviation = true) {
    if (gs.base().empty()) throw ConfigError("bench needs a Gaussian set with its source image");
    using clock = std::chrono::steady_clock;
    std::vector<BenchRow> rows;
    for (double r : scales) {
        const RenderPlan direct_plan = RenderPlan::at_scale(r, DirectStrategy{});
        const TargetGrid grid = target_grid(direct_plan, gs.base().meta());
        MultiBandImage direct;
        if (with_deviation) direct = render_direct(gs, direct_plan);
        const MultiBandImage reference = make_reference(gs.base(), grid.width, grid.height);
        for (const StrategySpec& spec : strategies) {
            const RenderPlan plan = RenderPlan::at_scale(r, spec.strategy, reference);
            const auto start = clock::now();
            MultiBandImage img;
            if (std::holds_alternative<VbgsStrategy>(spec.strategy)) {
                if (spec.brute_force) {
                    img = render_vbgs(gs, nullptr, plan);
                } else {
                    const GaussianGridIndex index = build_index(gs);
                    img = render_vbgs(gs, &index, plan);
                }
            } else {
                img = render(gs, plan);
            }
            const double secs = std::chrono::duration<double>(clock::now() - start).count();
            BenchRow row{r, spec.name, grid.width, grid.height, secs,
                         static_cast<double>(grid.points.size()) / std::max(secs, 1e-12), 0.0, 0.0};
            if (with_deviation) {
                double max_dev = 0.0, sq = 0.0;
                for (std::size_t i = 0; i < img.data().size(); ++i) {
                    const double d = std::abs(img.data()[i] - direct.data()[i]);
                    max_dev = std::max(max_dev, d);
                    sq += d * d;
                }
                row.max_abs_dev = max_dev;
                row.rms_dev = std::sqrt(sq / static_cast<double>(img.data().size()));
            } else {
                row.max_abs_dev = row.rms_dev = std::numeric_limits<double>::quiet_NaN();
            }
            rows.push_back(row);
        }
    }
    return rows;
}

inline void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows) {
    os << "scale,strategy,width,height,seconds,pixels_per_second,max_abs_dev_from_direct,rms_dev_from_direct\n";
    for (const auto& r : rows)
        os << format_metric(r.scale) << ',' << r.strategy << ',' << r.width << ',' << r.height << ','
           << format_metric(r.seconds) << ',' << format_metric(r.pixels_per_second) << ','
           << format_metric(r.max_abs_dev) << ',' << format_metric(r.rms_dev) << '\n';
}

}  // namespace vbgs
