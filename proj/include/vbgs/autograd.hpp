#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "vbgs/errors.hpp"
#include "vbgs/gaussian_model.hpp"
#include "vbgs/image.hpp"
#include "vbgs/metrics.hpp"
#include "vbgs/parallel.hpp"
#include "vbgs/render.hpp"
#include "vbgs/resample.hpp"
#include "vbgs/selection.hpp"

namespace vbgs {

enum class LossKind { L2, L1 };

inline double loss(const MultiBandImage& rendered, const MultiBandImage& target, LossKind kind) {
    require_same_shape(rendered, target, "loss");
    const auto a = rendered.data();
    const auto b = target.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += kind == LossKind::L2 ? d * d : std::abs(d);
    }
    return acc / static_cast<double>(a.size());
}

/// Partials of the loss with respect to every raw parameter.
struct GradBundle : ParamArrays {
    GradBundle() = default;
    explicit GradBundle(ParamArrays p) : ParamArrays(std::move(p)) {}
    static GradBundle zeros(std::size_t count, std::size_t bands) { return GradBundle(ParamArrays::zeros(count, bands)); }

    bool all_finite() const {
        for (ParamClass c : kParamClasses)
            for (double v : array(c))
                if (!std::isfinite(v)) return false;
        return true;
    }
};

/// Gradient with respect to the constrained quantities: center_x/center_y
/// hold dL/dX, dL/dY; scale_x/scale_y dL/dsigma; correlation dL/drho;
/// feature dL/dF; temperature dL/dgamma.
using ConstrainedGrad = ParamArrays;

/// Rendering problem for the fitting loss: target grid, reference spectra,
/// target values and the top-k selection per target pixel.
struct VbgsObjective {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<Point2> points;
    MultiBandImage reference;
    MultiBandImage target;
    std::size_t k = 16;
    LossKind kind = LossKind::L2;
    std::vector<SelectionResult> selections;

    /// Objective at scale r against `target`, reference upsampled from `source`.
    static VbgsObjective make(const MultiBandImage& source, const MultiBandImage& target, double scale,
                              std::size_t k, LossKind kind, Interpolation mode = Interpolation::Bilinear) {
        VbgsObjective obj;
        obj.width = scaled_extent(source.width(), scale);
        obj.height = scaled_extent(source.height(), scale);
        if (target.width() != obj.width || target.height() != obj.height || target.bands() != source.bands())
            throw ShapeError("target image does not match the " + std::to_string(obj.width) + "x" +
                             std::to_string(obj.height) + " render grid");
        if (k == 0) throw ConfigError("k must be at least 1");
        obj.points = pixel_center_coords(obj.width, obj.height);
        obj.reference = make_reference(source, obj.width, obj.height, mode);
        obj.target = target;
        obj.k = k;
        obj.kind = kind;
        return obj;
    }

    void select(const GaussianSet& gs, const GaussianGridIndex& index) {
        selections.resize(points.size());
        parallel_for(points.size(), [&](std::size_t px) { selections[px] = index.top_k(gs, points[px], k); });
    }

    void select_brute_force(const GaussianSet& gs) {
        selections.resize(points.size());
        parallel_for(points.size(), [&](std::size_t px) { selections[px] = brute_force_top_k(gs, points[px], k); });
    }

    MultiBandImage render(const GaussianSet& gs) const {
        if (selections.size() != points.size()) throw ConfigError("objective has no selection sets");
        MultiBandImage out(ImageMeta{width, height, gs.bands(), target.meta().range});
        parallel_for(points.size(), [&](std::size_t px) {
            std::vector<double> r = reference.spectrum(px);
            std::vector<double> v(gs.bands());
            vbgs_point(gs, selections[px], points[px], r, v);
            out.set_spectrum(px, v);
        });
        return out;
    }

    double evaluate(const GaussianSet& gs) const { return loss(render(gs), target, kind); }
};

namespace detail {

/// Accumulates one pixel's contribution to the constrained gradient.
inline void backward_pixel(const GaussianSet& gs, const VbgsObjective& obj, std::size_t px,
                           std::span<const double> rendered_px, ConstrainedGrad& g, std::vector<double>& scratch) {
    const std::size_t bands = gs.bands();
    const SelectionResult& sel = obj.selections[px];
    const std::size_t m = sel.indices.size();
    const Point2 p = obj.points[px];
    const double inv_count = 1.0 / static_cast<double>(obj.target.data().size());

    scratch.assign(2 * bands, 0.0);
    double* e = scratch.data();          // dL/d(output)
    double* ref = scratch.data() + bands;
    for (std::size_t b = 0; b < bands; ++b) {
        ref[b] = obj.reference.value(b, px);
        const double diff = rendered_px[b] - obj.target.value(b, px);
        e[b] = obj.kind == LossKind::L2 ? 2.0 * diff * inv_count
                                        : (diff > 0.0 ? inv_count : (diff < 0.0 ? -inv_count : 0.0));
    }
    double ref_norm = 0.0;
    for (std::size_t b = 0; b < bands; ++b) ref_norm += ref[b] * ref[b];
    ref_norm = std::sqrt(ref_norm);

    const double gamma = gs.gamma();
    std::vector<double> sims(m), weights(m), kernels(m), feat_norms(m);
    double weight_sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t n = sel.indices[i];
        const auto f = gs.feature(n);
        double dot = 0.0, nf = 0.0;
        for (std::size_t b = 0; b < bands; ++b) {
            dot += f[b] * ref[b];
            nf += f[b] * f[b];
        }
        nf = std::sqrt(nf);
        feat_norms[i] = nf;
        sims[i] = (nf < 1e-12 || ref_norm < 1e-12) ? 0.0 : dot / (nf * ref_norm);
        weights[i] = std::exp(gamma * sims[i]);
        kernels[i] = kernel(gs.gaussian(n), p);
        weight_sum += weights[i];
    }
    if (!(weight_sum > 0.0)) return;

    double e_dot_out = 0.0;
    for (std::size_t b = 0; b < bands; ++b) e_dot_out += e[b] * rendered_px[b];

    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t n = sel.indices[i];
        const auto f = gs.feature(n);
        const Gaussian& gau = gs.gaussian(n);
        const double w = weights[i], kv = kernels[i];

        double e_dot_f = 0.0;
        for (std::size_t b = 0; b < bands; ++b) e_dot_f += e[b] * f[b];

        // output = sum_i w_i K_i F_i / W
        const double d_kernel = w / weight_sum * e_dot_f;
        const double d_weight = (kv * e_dot_f - e_dot_out) / weight_sum;
        const double d_sim = d_weight * gamma * w;
        g.temperature += d_weight * sims[i] * w;

        double* gf = g.feature.data() + n * bands;
        const double scale_f = w / weight_sum * kv;
        for (std::size_t b = 0; b < bands; ++b) gf[b] += scale_f * e[b];
        if (feat_norms[i] >= 1e-12 && ref_norm >= 1e-12 && d_sim != 0.0) {
            const double inv_nr = 1.0 / (feat_norms[i] * ref_norm);
            const double s_over_f2 = sims[i] / (feat_norms[i] * feat_norms[i]);
            for (std::size_t b = 0; b < bands; ++b) gf[b] += d_sim * (ref[b] * inv_nr - s_over_f2 * f[b]);
        }

        // Geometry: dK = K * dlogK.
        const double dk = d_kernel * kv;
        if (dk == 0.0) continue;
        const double sx = gau.sigma_x, sy = gau.sigma_y, rho = gau.rho;
        const double om = 1.0 - rho * rho;
        const double a = (p.x - gau.center.x) / sx;
        const double bb = (p.y - gau.center.y) / sy;
        const double ua = a - rho * bb;
        const double ub = bb - rho * a;
        const double quad = a * a - 2.0 * rho * a * bb + bb * bb;
        g.center_x[n] += dk * ua / (om * sx);
        g.center_y[n] += dk * ub / (om * sy);
        g.scale_x[n] += dk * (ua * a / om - 1.0) / sx;
        g.scale_y[n] += dk * (ub * bb / om - 1.0) / sy;
        g.correlation[n] += dk * (a * bb / om - rho * quad / (om * om) + rho / om);
    }
}

inline void add_into(ParamArrays& dst, const ParamArrays& src) {
    for (ParamClass c : kParamClasses) {
        auto d = dst.array(c);
        const auto s = src.array(c);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
    }
}

}  // namespace detail

/// Gradient of the objective with respect to the constrained parameters,
/// with the selection sets held fixed.
inline ConstrainedGrad backward_constrained(const GaussianSet& gs, const VbgsObjective& obj,
                                            const MultiBandImage& rendered) {
    const std::size_t n_px = obj.points.size();
    const bool det = deterministic();
    const std::size_t chunks = std::max<std::size_t>(1, std::min<std::size_t>(n_px, det ? 32 : thread_count()));
    std::vector<ConstrainedGrad> partial(chunks, ParamArrays::zeros(gs.size(), gs.bands()));
    std::atomic<std::size_t> next{0};
    parallel_for(chunks, [&](std::size_t c) {
        std::vector<double> scratch, out_px(gs.bands());
        auto run = [&](std::size_t px) {
            rendered.spectrum(px, out_px);
            detail::backward_pixel(gs, obj, px, out_px, partial[c], scratch);
        };
        if (det) {
            const std::size_t begin = c * n_px / chunks, end = (c + 1) * n_px / chunks;
            for (std::size_t px = begin; px < end; ++px) run(px);
        } else {
            for (std::size_t px = next.fetch_add(1); px < n_px; px = next.fetch_add(1)) run(px);
        }
    }, 1);
    // Pairwise tree reduction in fixed chunk order.
    for (std::size_t stride = 1; stride < chunks; stride *= 2)
        for (std::size_t c = 0; c + stride < chunks; c += 2 * stride) detail::add_into(partial[c], partial[c + stride]);
    return std::move(partial[0]);
}

/// Chains constrained-parameter gradients through the activations.
inline GradBundle chain_to_raw(const RawGaussianParams& raw, const MultiBandImage& source, const ConstrainedGrad& cg) {
    GradBundle g = GradBundle::zeros(raw.count, raw.bands);
    const double rho_limit = 1.0 - kRhoMargin;
    for (std::size_t n = 0; n < raw.count; ++n) {
        const double tx = std::tanh(raw.center_x[n]), ty = std::tanh(raw.center_y[n]);
        g.center_x[n] = cg.center_x[n] * (1.0 - tx * tx);
        g.center_y[n] = cg.center_y[n] * (1.0 - ty * ty);
        g.scale_x[n] = softplus(raw.scale_x[n]) > kSigmaFloor ? cg.scale_x[n] * sigmoid(raw.scale_x[n]) : 0.0;
        g.scale_y[n] = softplus(raw.scale_y[n]) > kSigmaFloor ? cg.scale_y[n] * sigmoid(raw.scale_y[n]) : 0.0;
        const double tr = std::tanh(raw.correlation[n]);
        g.correlation[n] = std::abs(tr) < rho_limit ? cg.correlation[n] * (1.0 - tr * tr) : 0.0;
        for (std::size_t b = 0; b < raw.bands; ++b) {
            const std::size_t i = n * raw.bands + b;
            g.feature[i] = source.value(b, n) + raw.feature[i] > 0.0 ? cg.feature[i] : 0.0;
        }
    }
    g.temperature = cg.temperature;
    return g;
}

/// Full backward pass: render with the objective's current selections, then
/// differentiate through the bilateral aggregation and the activations.
inline GradBundle backward(const RawGaussianParams& raw, const GaussianSet& gs, const VbgsObjective& obj) {
    const MultiBandImage rendered = obj.render(gs);
    return chain_to_raw(raw, gs.base(), backward_constrained(gs, obj, rendered));
}

/// Convenience form: selection from `index`, target at the plan's scale.
inline GradBundle backward(const RawGaussianParams& raw, const GaussianSet& gs, const GaussianGridIndex& index,
                           const RenderPlan& plan, const MultiBandImage& target, LossKind kind) {
    const auto* strat = std::get_if<VbgsStrategy>(&plan.strategy);
    const auto* scale = std::get_if<ScaleTarget>(&plan.target);
    if (!strat || !scale) throw ConfigError("backward needs a vbgs plan on a scaled grid");
    VbgsObjective obj = VbgsObjective::make(gs.base(), target, scale->scale, strat->k, kind);
    if (plan.reference) {
        require_same_shape(*plan.reference, obj.reference, "backward reference");
        obj.reference = *plan.reference;
    }
    obj.select(gs, index);
    return backward(raw, gs, obj);
}

// ---------------------------------------------------------------------------
// Optimizer

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Step learning rate: `initial` until `decay_step`, then `decayed`.
struct LearningRateSchedule {
    double initial = 8e-4;
    std::optional<std::size_t> decay_step;  // defaults to one fifth of the run
    double decayed = 1e-4;

    double at(std::size_t step, std::size_t total_steps) const {
        const std::size_t decay = decay_step.value_or(total_steps / 5);
        return step < decay ? initial : decayed;
    }
};

struct FitConfig {
    std::size_t steps = 2000;
    LearningRateSchedule lr;
    LossKind loss = LossKind::L2;
    std::size_t k = 16;
    std::size_t rebuild_period = 10;
    AdamConfig adam;
    std::uint64_t seed = 0;
    double scale = 1.0;
    Interpolation reference_mode = Interpolation::Bilinear;

    void validate() const {
        if (!(lr.initial > 0.0) || !(lr.decayed > 0.0)) throw ConfigError("learning rates must be positive");
        if (rebuild_period < 1) throw ConfigError("index rebuild period must be at least 1");
        if (k < 1) throw ConfigError("k must be at least 1");
        if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0 && adam.epsilon > 0.0))
            throw ConfigError("invalid Adam coefficients");
    }
};

struct AdamState {
    ParamArrays m;
    ParamArrays v;
    std::size_t t = 0;

    static AdamState zeros(std::size_t count, std::size_t bands) {
        return {ParamArrays::zeros(count, bands), ParamArrays::zeros(count, bands), 0};
    }
};

/// Bias-corrected Adam update. A non-finite gradient rejects the whole step
/// with a ParameterError naming the parameter class and Gaussian.
inline void adam_step(RawGaussianParams& raw, const GradBundle& grads, AdamState& state, double lr,
                      const AdamConfig& cfg) {
    if (!raw.shape_matches(grads) || !raw.shape_matches(state.m) || !raw.shape_matches(state.v))
        throw ShapeError("optimizer state does not match the parameters");
    for (ParamClass c : kParamClasses) {
        const auto g = grads.array(c);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (!std::isfinite(g[i]))
                throw ParameterError("non-finite gradient for " + std::string(param_class_name(c)) + " at Gaussian " +
                                     std::to_string(grads.owner(c, i)));
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (ParamClass c : kParamClasses) {
        auto p = raw.array(c);
        auto m = state.m.array(c);
        auto v = state.v.array(c);
        const auto g = grads.array(c);
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.epsilon);
        }
    }
}

inline void adam_step(RawGaussianParams& raw, const GradBundle& grads, AdamState& state, std::size_t step_index,
                      const FitConfig& cfg) {
    adam_step(raw, grads, state, cfg.lr.at(step_index, cfg.steps), cfg.adam);
}

// ---------------------------------------------------------------------------
// Fitting

struct TraceRow {
    std::size_t step = 0;
    double loss = 0.0;
    double psnr = 0.0;
};

struct FitResult {
    RawGaussianParams raw;
    GaussianSet set;
    /// One row per optimizer step (loss before the update) plus a final row
    /// at step == steps for the single-precision parameters that get saved.
    std::vector<TraceRow> trace;
    double baseline_psnr = 0.0;
    bool diverged = false;
    std::size_t failed_step = 0;
    std::string failure;
};

/// Raw parameters as they survive a single-precision round trip.
inline RawGaussianParams round_to_float(RawGaussianParams raw) {
    for (ParamClass c : kParamClasses)
        for (double& v : raw.array(c)) v = static_cast<double>(static_cast<float>(v));
    return raw;
}

inline MultiBandImage round_to_float(MultiBandImage img) {
    for (double& v : img.data()) v = static_cast<double>(static_cast<float>(v));
    return img;
}

/// Fits a Gaussian set to `source` (or to `hr_target` at config.scale).
/// Starts from all-zero raw parameters so the initial set sits on the pixel
/// centers carrying the source spectra.
inline FitResult fit(const MultiBandImage& source, const FitConfig& config, const MultiBandImage* hr_target = nullptr,
                     const std::function<void(const TraceRow&)>& on_step = {}) {
    source.validate();
    config.validate();
    const double scale = hr_target ? config.scale : 1.0;
    const MultiBandImage& target = hr_target ? *hr_target : source;
    VbgsObjective obj = VbgsObjective::make(source, target, scale, config.k, config.loss, config.reference_mode);
    const double peak = source.meta().range.width();
    const double cell = default_cell_size(source.meta());

    FitResult result;
    RawGaussianParams raw = RawGaussianParams::zeros(source.pixel_count(), source.bands());
    AdamState state = AdamState::zeros(raw.count, raw.bands);
    GaussianSet gs = constrain(raw, source);

    for (std::size_t step = 0; step < config.steps; ++step) {
        if (step % config.rebuild_period == 0) obj.select(gs, build_index(gs, cell));
        const MultiBandImage rendered = obj.render(gs);
        const double l = loss(rendered, target, config.loss);
        if (!std::isfinite(l)) {
            result.diverged = true;
            result.failed_step = step;
            result.failure = "loss became non-finite";
            break;
        }
        const TraceRow row{step, l, psnr(rendered, target, peak)};
        result.trace.push_back(row);
        if (step == 0) result.baseline_psnr = row.psnr;
        if (on_step) on_step(row);

        const GradBundle grads = chain_to_raw(raw, source, backward_constrained(gs, obj, rendered));
        RawGaussianParams next = raw;
        AdamState next_state = state;
        try {
            adam_step(next, grads, next_state, step, config);
            GaussianSet next_set = constrain(next, source);
            raw = std::move(next);
            state = std::move(next_state);
            gs = std::move(next_set);
        } catch (const ParameterError& e) {
            result.diverged = true;
            result.failed_step = step;
            result.failure = e.what();
            break;
        }
    }

    // Final row: parameters as stored on disk, fresh selection.
    raw = round_to_float(raw);
    gs = constrain(raw, source);
    obj.select(gs, build_index(gs, cell));
    const MultiBandImage rendered = round_to_float(obj.render(gs));
    const std::size_t final_step = result.diverged ? result.failed_step : config.steps;
    const TraceRow last{final_step, loss(rendered, target, config.loss), psnr(rendered, target, peak)};
    result.trace.push_back(last);
    if (result.trace.size() == 1) result.baseline_psnr = last.psnr;
    if (on_step) on_step(last);
    result.raw = std::move(raw);
    result.set = std::move(gs);
    return result;
}

// ---------------------------------------------------------------------------
// Finite-difference verification

struct GradcheckOptions {
    std::uint64_t seed = 1;
    std::size_t trials = 100;
    std::size_t size = 8;
    std::size_t bands = 3;
    std::size_t k = 4;
    double scale = 2.0;
    double step = 1e-5;
    double tolerance = 1e-4;
    /// Entries with |gradient| below this use the absolute criterion.
    double small_gradient = 1e-6;
    double small_tolerance = 1e-8;
    /// Minimum gap between the k-th and (k+1)-th distance at every pixel.
    double selection_gap = 1e-3;
    /// Test hook applied to each analytic gradient before comparison.
    std::function<void(GradBundle&)> corrupt;
};

struct ClassReport {
    ParamClass cls = ParamClass::CenterX;
    double max_rel_error = 0.0;
    double max_abs_error_small = 0.0;
    std::size_t checked = 0;
    bool passed = true;
};

struct GradcheckReport {
    std::vector<ClassReport> classes;
    std::size_t trials = 0;
    std::size_t rejected_configs = 0;
    bool passed = true;

    std::vector<std::string> failing() const {
        std::vector<std::string> out;
        for (const auto& c : classes)
            if (!c.passed) out.emplace_back(param_class_name(c.cls));
        return out;
    }
};

/// Random configuration away from selection ties, ReLU kinks and the
/// activation floors.
struct GradcheckCase {
    MultiBandImage source;
    MultiBandImage target;
    RawGaussianParams raw;
};

inline bool selection_gaps_ok(const GaussianSet& gs, const std::vector<Point2>& points, std::size_t k, double gap) {
    if (gs.size() <= k) return true;
    for (const Point2& p : points) {
        const SelectionResult r = brute_force_top_k(gs, p, k + 1);
        if (!(r.distances[k] - r.distances[k - 1] > gap)) return false;
    }
    return true;
}

inline GradcheckCase random_gradcheck_case(std::mt19937_64& rng, const GradcheckOptions& opt,
                                           std::size_t& rejected) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
    const ImageMeta meta{opt.size, opt.size, opt.bands, {}};
    const std::size_t hr = scaled_extent(opt.size, opt.scale);
    for (;;) {
        GradcheckCase c;
        c.source = MultiBandImage(meta);
        for (double& v : c.source.data()) v = unit(rng);
        c.target = MultiBandImage(ImageMeta{hr, hr, opt.bands, {}});
        for (double& v : c.target.data()) v = unit(rng);
        c.raw = RawGaussianParams::zeros(meta.pixel_count(), opt.bands);
        for (std::size_t n = 0; n < c.raw.count; ++n) {
            c.raw.center_x[n] = uniform(-0.1, 0.1);
            c.raw.center_y[n] = uniform(-0.1, 0.1);
            c.raw.scale_x[n] = uniform(-1.5, 0.5);
            c.raw.scale_y[n] = uniform(-1.5, 0.5);
            c.raw.correlation[n] = uniform(-1.5, 1.5);
        }
        bool kink = false;
        for (std::size_t i = 0; i < c.raw.feature.size(); ++i) {
            c.raw.feature[i] = uniform(-0.4, 0.4);
            const double pre = c.source.value(i % opt.bands, i / opt.bands) + c.raw.feature[i];
            if (std::abs(pre) < 1e-3) kink = true;
        }
        c.raw.temperature = uniform(-2.0, 2.0);
        const GaussianSet gs = constrain(c.raw, c.source);
        if (!kink && selection_gaps_ok(gs, pixel_center_coords(hr, hr), opt.k, opt.selection_gap)) return c;
        ++rejected;
    }
}

/// Compares backward() against central finite differences of the true
/// objective (selection recomputed at every perturbed point).
inline GradcheckReport gradcheck(const GradcheckOptions& opt) {
    if (opt.trials < 1) throw ConfigError("gradcheck needs at least one trial");
    GradcheckReport report;
    for (ParamClass c : kParamClasses) report.classes.push_back({c});
    std::mt19937_64 rng(opt.seed);

    for (std::size_t trial = 0; trial < opt.trials; ++trial) {
        const GradcheckCase gc = random_gradcheck_case(rng, opt, report.rejected_configs);
        VbgsObjective obj = VbgsObjective::make(gc.source, gc.target, opt.scale, opt.k, LossKind::L2);
        const GaussianSet gs = constrain(gc.raw, gc.source);
        obj.select_brute_force(gs);
        GradBundle analytic = backward(gc.raw, gs, obj);
        if (opt.corrupt) opt.corrupt(analytic);

        auto objective_at = [&](const RawGaussianParams& raw) {
            VbgsObjective local = obj;
            const GaussianSet set = constrain(raw, gc.source);
            local.select_brute_force(set);
            return local.evaluate(set);
        };

        for (std::size_t ci = 0; ci < kParamClasses.size(); ++ci) {
            const ParamClass cls = kParamClasses[ci];
            const std::size_t len = gc.raw.array(cls).size();
            std::vector<double> numeric(len);
            parallel_for(len, [&](std::size_t i) {
                RawGaussianParams plus = gc.raw, minus = gc.raw;
                plus.array(cls)[i] += opt.step;
                minus.array(cls)[i] -= opt.step;
                numeric[i] = (objective_at(plus) - objective_at(minus)) / (2.0 * opt.step);
            }, 4);
            ClassReport& cr = report.classes[ci];
            const auto a = analytic.array(cls);
            for (std::size_t i = 0; i < len; ++i) {
                const double mag = std::max(std::abs(a[i]), std::abs(numeric[i]));
                const double err = std::abs(a[i] - numeric[i]);
                ++cr.checked;
                if (mag < opt.small_gradient) {
                    cr.max_abs_error_small = std::max(cr.max_abs_error_small, err);
                    if (!(err <= opt.small_tolerance)) cr.passed = false;
                } else {
                    cr.max_rel_error = std::max(cr.max_rel_error, err / mag);
                    if (!(err / mag <= opt.tolerance)) cr.passed = false;
                }
            }
        }
        ++report.trials;
    }
    for (const auto& c : report.classes) report.passed = report.passed && c.passed;
    return report;
}

}  // namespace vbgs
