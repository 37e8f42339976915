// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "test_support.hpp"
#include "vbgs/vbgs.hpp"

namespace {

using namespace vbgs;
using clock_type = std::chrono::steady_clock;

int failures = 0;

void report(const char* id, bool ok, const std::string& detail) {
    std::printf("%s %s %s\n", ok ? "PASS" : "FAIL", id, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(clock_type::time_point t0) {
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

double rel_error(double a, double b) {
    const double mag = std::max(std::abs(a), std::abs(b));
    return mag == 0.0 ? 0.0 : std::abs(a - b) / mag;
}

GaussianSet random_set(std::size_t w, std::size_t h, std::size_t bands, std::uint64_t seed) {
    const auto base = testing::random_image(w, h, bands, seed);
    return constrain(testing::random_raw(base.meta(), seed + 1), base);
}

// Gradients of all seven parameter classes against central differences.
void ac1() {
    GradcheckOptions opt;
    opt.trials = 100;
    const auto t0 = clock_type::now();
    const GradcheckReport r = gradcheck(opt);
    const double secs = seconds_since(t0);
    double worst = 0.0, worst_small = 0.0;
    std::string per_class;
    for (const auto& c : r.classes) {
        worst = std::max(worst, c.max_rel_error);
        worst_small = std::max(worst_small, c.max_abs_error_small);
        per_class += fmt(" %s=%.2e", std::string(param_class_name(c.cls)).c_str(), c.max_rel_error);
    }
    report("AC1", r.passed && worst <= 1e-4 && secs < 60.0,
           fmt("gradcheck trials=%zu max_rel=%.3e (<=1e-4) max_abs_small=%.1e (<=1e-8) time=%.1fs (<60s)", r.trials,
               worst, worst_small, secs) +
               per_class);
}

// Indexed top-k against brute force.
void ac2() {
    const GaussianSet gs = random_set(32, 32, 2, 2001);
    const GaussianGridIndex index = build_index(gs);
    std::mt19937_64 rng(2002);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::size_t mismatched = 0, euclid_differs = 0;
    double worst = 0.0;
    for (int q = 0; q < 1000; ++q) {
        const Point2 p{u(rng), u(rng)};
        for (std::size_t k : {1u, 16u, 64u}) {
            const SelectionResult a = index.top_k(gs, p, k);
            const SelectionResult b = brute_force_top_k(gs, p, k);
            if (a.indices != b.indices) ++mismatched;
            for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i)
                worst = std::max(worst, std::abs(a.distances[i] - b.distances[i]));
            std::vector<std::pair<double, std::size_t>> euclid;
            for (std::size_t n = 0; n < gs.size(); ++n) {
                const Point2 c = gs.gaussian(n).center;
                euclid.push_back({std::hypot(c.x - p.x, c.y - p.y), n});
            }
            std::partial_sort(euclid.begin(), euclid.begin() + static_cast<std::ptrdiff_t>(k), euclid.end());
            for (std::size_t i = 0; i < k; ++i)
                if (euclid[i].second != b.indices[i]) {
                    ++euclid_differs;
                    break;
                }
        }
    }
    // Constructed: a near, small isotropic Gaussian versus a far one elongated toward the query.
    const Gaussian near = Gaussian::make({0.0, 0.2}, 0.02, 0.02, 0.0);
    const Gaussian far = Gaussian::make({0.6, 0.0}, 0.5, 0.02, 0.0);
    const GaussianSet pair({near, far}, {0.0, 0.0}, 1, 0.0);
    const Point2 origin{0.0, 0.0};
    const bool constructed = mahalanobis(far, origin) < mahalanobis(near, origin) &&
                             build_index(pair, 0.1).top_k(pair, origin, 1).indices[0] == 1 &&
                             brute_force_top_k(pair, origin, 1).indices[0] == 1;
    report("AC2", mismatched == 0 && worst <= 1e-12 && constructed && euclid_differs > 0,
           fmt("3000 queries index mismatches=%zu max_dist_err=%.1e (<=1e-12) euclidean_order_differs=%zu "
               "constructed_case=%s",
               mismatched, worst, euclid_differs, constructed ? "ok" : "wrong"));
}

// Strategy equivalence ladder.
void ac3() {
    double worst_vbgs = 0.0, worst_raster = 0.0;
    for (std::uint64_t s = 0; s < 10; ++s) {
        const std::size_t w = 6 + s % 4, h = 5 + (s * 3) % 5;
        const auto base = testing::random_image(w, h, 3, 3000 + 10 * s);
        RawGaussianParams raw = testing::random_raw(base.meta(), 3001 + 10 * s);
        const GaussianSet gs = constrain(raw, base);
        raw.temperature = 0.0;
        const GaussianSet flat = constrain(raw, base);
        const RenderPlan direct_plan = RenderPlan::at_scale(2.0, DirectStrategy{});
        const MultiBandImage direct = render_direct(gs, direct_plan);
        const auto ref = testing::random_image(direct.width(), direct.height(), 3, 3005 + 10 * s);
        const MultiBandImage v = render_vbgs(flat, nullptr, RenderPlan::at_scale(2.0, VbgsStrategy{gs.size()}, ref));
        const MultiBandImage r = render_rasterized(
            gs, RenderPlan::at_scale(2.0, RasterStrategy{std::numeric_limits<double>::infinity()}));
        const double n = static_cast<double>(gs.size());
        for (std::size_t i = 0; i < direct.data().size(); ++i) {
            worst_vbgs = std::max(worst_vbgs, rel_error(v.data()[i], direct.data()[i] / n));
            worst_raster = std::max(worst_raster, rel_error(r.data()[i], direct.data()[i]));
        }
    }
    report("AC3", worst_vbgs <= 1e-12 && worst_raster <= 1e-12,
           fmt("10 sets vbgs(gamma=0,k=N) vs direct/N rel=%.2e, raster(inf) vs direct rel=%.2e (<=1e-12)", worst_vbgs,
               worst_raster));
}

// Pre-build oracle run of this exact configuration gained 12.65 dB; the
// locked threshold is 6 dB.
constexpr double kFitGainOracleDb = 12.65;
constexpr double kFitGainThresholdDb = 6.0;

FitResult ac4(const MultiBandImage& img) {
    FitConfig cfg;
    cfg.steps = 2000;
    cfg.k = 16;
    const auto t0 = clock_type::now();
    FitResult r = fit(img, cfg);
    const double secs = seconds_since(t0);
    const double gain = r.trace.back().psnr - r.baseline_psnr;
    std::size_t violations = 0, first = 0;
    for (std::size_t t = 200; t + 100 < r.trace.size(); ++t)
        if (r.trace[t + 100].loss > r.trace[t].loss && violations++ == 0) first = t;
    report("AC4", !r.diverged && gain >= kFitGainThresholdDb && violations == 0,
           fmt("32x32x8 fit 2000 steps baseline=%.2f dB final=%.2f dB gain=%.2f dB (>=%.1f, oracle %.2f) "
               "window violations=%zu%s time=%.1fs",
               r.baseline_psnr, r.trace.back().psnr, gain, kFitGainThresholdDb, kFitGainOracleDb, violations,
               violations ? fmt(" first at step %zu", first).c_str() : "", secs));
    return r;
}

void ac5(const FitResult& fitted, const MultiBandImage& img) {
    const GaussianGridIndex index = build_index(fitted.set);
    std::string detail = "k-sweep psnr:";
    double best_small = -std::numeric_limits<double>::infinity(), at_1024 = 0.0;
    for (std::size_t k : {8u, 16u, 32u, 128u, 1024u}) {
        const double p = psnr(render_vbgs(fitted.set, index, RenderPlan::at_scale(1.0, VbgsStrategy{k}, img)), img);
        detail += fmt(" k=%zu:%.2f", k, p);
        if (k <= 32) best_small = std::max(best_small, p);
        if (k == 1024) at_1024 = p;
    }
    report("AC5", at_1024 < best_small,
           detail + fmt(" (k=1024 %.2f < best small-k %.2f)", at_1024, best_small));
}

void ac6() {
    const auto a = testing::random_image(16, 16, 6, 6001, 0.05, 1.0);
    auto twice = a;
    for (double& v : twice.data()) v *= 2.0;
    const double sam_scaled = sam(a, twice);
    const double ssim_self = ssim(a, a);
    MultiBandImage zero(ImageMeta{4, 3, 2, {0.0, 2.0}});
    MultiBandImage ones = zero;
    for (double& v : ones.data()) v = 1.0;
    const double p = psnr(zero, ones);
    const bool ok = std::abs(sam_scaled) <= 1e-9 && std::abs(ssim_self - 1.0) <= 1e-9 &&
                    std::abs(p - 10.0 * std::log10(4.0)) <= 1e-9 && std::abs(p - 6.0206) < 1e-4;
    report("AC6", ok,
           fmt("sam(a,2a)=%.2e ssim(a,a)-1=%.2e psnr closed form=%.10f dB (6.0206, tol 1e-9)", sam_scaled,
               ssim_self - 1.0, p));
}

void ac7() {
    std::mt19937_64 rng(7001);
    std::size_t failed = 0, with_effect = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t c = 2 + trial % 3, in = 5 + trial % 3, patch = trial % 2 ? 5 : 3;
        const double scale = trial % 4 == 0 ? 1.5 : 2.0;
        const SdeWeights w = sde_random_init(7100 + trial, {c, patch, 16});
        const auto f = testing::random_image(in, in, c, 7200 + trial);
        const auto base = sde_forward(f, scale, w);
        const std::size_t out = base.width();
        std::uniform_int_distribution<std::size_t> coord(0, out - 1);
        const std::size_t x = coord(rng), y = coord(rng);
        bool effect = false;
        for (std::size_t sy = 0; sy < in; ++sy)
            for (std::size_t sx = 0; sx < in; ++sx) {
                auto g = f;
                for (std::size_t b = 0; b < c; ++b) g.at(b, sy, sx) += 0.37;
                const auto perturbed = sde_forward(g, scale, w);
                bool same = true;
                for (std::size_t b = 0; b < c; ++b) same = same && perturbed.at(b, y, x) == base.at(b, y, x);
                const bool inside = testing::in_sde_receptive_field(x, y, sx, sy, in, in, out, out, patch);
                if (!inside && !same) ++failed;
                if (inside && !same) effect = true;
            }
        if (effect) ++with_effect;
    }
    report("AC7", failed == 0 && with_effect == 50,
           fmt("50 triples: out-of-field changes=%zu, triples where the field has an effect=%zu/50", failed,
               with_effect));
}

void ac8(const FitResult& fitted, const MultiBandImage& img) {
    set_deterministic(true);
    const GaussianSet& gs = fitted.set;
    const GaussianGridIndex index = build_index(gs);
    std::size_t non_finite = 0, mismatched = 0, checked = 0;
    std::string sizes;
    for (double r : {1.0, 1.5, 2.0, 3.7, 6.0, 8.0}) {
        const std::size_t w = scaled_extent(img.width(), r), h = scaled_extent(img.height(), r);
        const auto ref = bilinear_resize(img, w, h);
        const std::vector<Strategy> strategies = {DirectStrategy{}, RasterStrategy{3.0}, VbgsStrategy{16}};
        for (const Strategy& s : strategies) {
            const auto out = render(gs, RenderPlan::at_scale(r, s, ref), &index);
            if (!out.all_finite()) ++non_finite;
            const auto points = pixel_center_coords(w, h);
            for (std::size_t px = 0; px < points.size(); px += 7) {
                std::vector<double> spectrum(gs.bands());
                for (std::size_t b = 0; b < gs.bands(); ++b) spectrum[b] = ref.value(b, px);
                const auto v = eval_point(gs, &index, points[px], s, spectrum);
                ++checked;
                for (std::size_t b = 0; b < gs.bands(); ++b)
                    if (v[b] != out.value(b, px)) {
                        ++mismatched;
                        break;
                    }
            }
        }
        sizes += fmt(" %gx:%zux%zu", r, w, h);
    }
    set_deterministic(false);
    report("AC8", non_finite == 0 && mismatched == 0,
           fmt("non-finite renders=%zu, eval_point vs grid mismatches=%zu/%zu;", non_finite, mismatched, checked) +
               sizes);
}

// Published bicubic x4 row for the Pavia cube.
constexpr double kPaviaPsnr = 25.28, kPaviaSam = 0.308;

void ac9() {
    const char* path = std::getenv("VBGS_PAVIA");
    if (!path || !*path) {
        std::printf("SKIP AC9 VBGS_PAVIA not set (dataset-dependent bicubic x4 check)\n");
        return;
    }
    MultiBandImage hr = read_image(path);
    double peak = 0.0;
    for (double v : hr.data()) peak = std::max(peak, v);
    if (peak > 0.0)
        for (double& v : hr.data()) v /= peak;
    hr = MultiBandImage(ImageMeta{hr.width(), hr.height(), hr.bands(), {}}, testing::values(hr));
    DegradeOptions opt;
    opt.scale = 4.0;
    const auto lr = synth_degrade(hr, opt);
    const auto up = bicubic_resize(lr, lr.width() * 4, lr.height() * 4, false);
    MultiBandImage crop(up.meta());
    for (std::size_t b = 0; b < hr.bands(); ++b)
        for (std::size_t y = 0; y < up.height(); ++y)
            for (std::size_t x = 0; x < up.width(); ++x) crop.at(b, y, x) = hr.at(b, y, x);
    const double p = psnr(up, crop), s = sam(up, crop);
    report("AC9", std::abs(p - kPaviaPsnr) <= 0.3 && std::abs(s - kPaviaSam) <= 0.02,
           fmt("bicubic x4 psnr=%.2f dB (%.2f +-0.3) sam=%.3f rad (%.3f +-0.02)", p, kPaviaPsnr, s, kPaviaSam));
}

void ac10() {
    const auto img = testing::smooth_image(64, 64, 8, 11);
    const FitResult fitted = fit(img, FitConfig{});
    const auto rows = bench(fitted.set, {4.0}, {parse_strategy("vbgs:16"), parse_strategy("vbgs-brute:16")}, false);
    const double ratio = rows[0].pixels_per_second / rows[1].pixels_per_second;
    report("AC10", ratio >= 10.0,
           fmt("64x64 set x4 (%zux%zu) k=16 indexed %.0f px/s vs brute force %.0f px/s: %.1fx (>=10x)", rows[0].width,
               rows[0].height, rows[0].pixels_per_second, rows[1].pixels_per_second, ratio));
}

template <class F>
void guarded(const char* id, F&& f) {
    try {
        f();
    } catch (const std::exception& e) {
        report(id, false, std::string("threw: ") + e.what());
    }
}

}  // namespace

int main() {
    guarded("AC1", ac1);
    guarded("AC2", ac2);
    guarded("AC3", ac3);
    const auto img = testing::smooth_image(32, 32, 8, 7);
    FitResult fitted;
    bool have_fit = false;
    guarded("AC4", [&] {
        fitted = ac4(img);
        have_fit = true;
    });
    if (have_fit) guarded("AC5", [&] { ac5(fitted, img); });
    else report("AC5", false, "no fitted set");
    guarded("AC6", ac6);
    guarded("AC7", ac7);
    if (have_fit) guarded("AC8", [&] { ac8(fitted, img); });
    else report("AC8", false, "no fitted set");
    guarded("AC9", ac9);
    guarded("AC10", ac10);
    std::printf("%s: %d criterion failure(s)\n", failures ? "FAIL" : "PASS", failures);
    return failures ? 1 : 0;
}
