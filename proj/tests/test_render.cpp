#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "test_support.hpp"
#include "vbgs/render.hpp"

namespace vbgs {
namespace {

// Scalar oracle: explicit bivariate normal density from (sx, sy, rho).
double density(Point2 c, double sx, double sy, double rho, Point2 p) {
    const double zx = (p.x - c.x) / sx, zy = (p.y - c.y) / sy;
    const double q = (zx * zx - 2.0 * rho * zx * zy + zy * zy) / (1.0 - rho * rho);
    return std::exp(-0.5 * q) / (2.0 * std::numbers::pi * sx * sy * std::sqrt(1.0 - rho * rho));
}

struct Spec {
    Point2 c;
    double sx, sy, rho;
};

GaussianSet scalar_set(const std::vector<Spec>& specs, const std::vector<double>& features, double gamma = 0.0) {
    std::vector<Gaussian> g;
    for (const Spec& s : specs) g.push_back(Gaussian::make(s.c, s.sx, s.sy, s.rho));
    return GaussianSet(g, features, features.size() / specs.size(), gamma);
}

GaussianSet fitted_like(std::size_t w, std::size_t h, std::size_t b, std::uint64_t seed) {
    const auto src = testing::smooth_image(w, h, b, seed);
    return constrain(testing::random_raw(src.meta(), seed + 1), src);
}

TEST(RenderDirectTest, UnitGaussianAtCenter) {
    const GaussianSet gs = scalar_set({{{0.0, 0.0}, 1.0, 1.0, 0.0}}, {1.0});
    const auto out = render_direct(gs, RenderPlan::at_points({{0.0, 0.0}}, DirectStrategy{}));
    EXPECT_NEAR(out.data()[0], 1.0 / (2.0 * std::numbers::pi), 1e-15);
}

TEST(RenderDirectTest, ZeroFeaturesRenderZero) {
    const auto src = MultiBandImage(ImageMeta{6, 5, 3, {}});
    const GaussianSet gs = constrain(testing::random_raw(src.meta(), 3, 0.0), src);
    for (const Strategy& s : {Strategy{DirectStrategy{}}, Strategy{RasterStrategy{3.0}}}) {
        const auto out = render(gs, RenderPlan::at_scale(2.0, s));
        for (double v : out.data()) EXPECT_EQ(v, 0.0);
    }
}

TEST(RenderDirectTest, MatchesScalarOracleOnThreeByThree) {
    const std::vector<Spec> specs = {{{-0.5, -0.2}, 0.3, 0.5, 0.2},
                                     {{0.4, 0.1}, 0.6, 0.2, -0.7},
                                     {{0.0, 0.6}, 0.25, 0.25, 0.0},
                                     {{-0.1, -0.8}, 0.9, 0.4, 0.5}};
    const std::vector<double> f = {0.3, 1.2, 0.7, 0.05};
    const GaussianSet gs = scalar_set(specs, f);
    const auto pts = pixel_center_coords(3, 3);
    const auto out = render_direct(gs, RenderPlan::at_points(pts, DirectStrategy{}));
    for (std::size_t i = 0; i < pts.size(); ++i) {
        double expected = 0.0;
        for (std::size_t n = 0; n < specs.size(); ++n)
            expected += f[n] * density(specs[n].c, specs[n].sx, specs[n].sy, specs[n].rho, pts[i]);
        EXPECT_NEAR(out.data()[i], expected, 1e-12 * std::max(1.0, expected));
    }
}

TEST(RenderDirectTest, LinearInFeatures) {
    const auto src_a = testing::random_image(5, 5, 2, 4);
    const auto src_b = testing::random_image(5, 5, 2, 5);
    const RawGaussianParams raw = testing::random_raw(src_a.meta(), 6, 0.0);
    MultiBandImage sum(src_a.meta());
    for (std::size_t i = 0; i < sum.data().size(); ++i) sum.data()[i] = 2.0 * src_a.data()[i] + 0.5 * src_b.data()[i];
    const auto plan = RenderPlan::at_scale(3.0, DirectStrategy{});
    const auto ra = render(constrain(raw, src_a), plan);
    const auto rb = render(constrain(raw, src_b), plan);
    const auto rs = render(constrain(raw, sum), plan);
    for (std::size_t i = 0; i < rs.data().size(); ++i)
        EXPECT_NEAR(rs.data()[i], 2.0 * ra.data()[i] + 0.5 * rb.data()[i], 1e-9);
}

TEST(RenderDirectTest, InvariantToGaussianPermutation) {
    const GaussianSet gs = fitted_like(6, 6, 2, 7);
    std::vector<std::size_t> perm(gs.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(8));
    std::vector<Gaussian> g;
    std::vector<double> f;
    for (std::size_t n : perm) {
        g.push_back(gs.gaussian(n));
        for (double v : gs.feature(n)) f.push_back(v);
    }
    const GaussianSet shuffled(g, f, gs.bands(), gs.gamma());
    const auto pts = pixel_center_coords(12, 12);
    const auto a = render(gs, RenderPlan::at_points(pts, DirectStrategy{}));
    const auto b = render(shuffled, RenderPlan::at_points(pts, DirectStrategy{}));
    for (std::size_t i = 0; i < a.data().size(); ++i) EXPECT_NEAR(a.data()[i], b.data()[i], 1e-12);
}

TEST(RenderRasterTest, InfiniteCutoffEqualsDirect) {
    const GaussianSet gs = fitted_like(8, 7, 3, 9);
    const auto a = render(gs, RenderPlan::at_scale(2.5, DirectStrategy{}));
    const auto b = render(gs, RenderPlan::at_scale(2.5, RasterStrategy{std::numeric_limits<double>::infinity()}));
    EXPECT_EQ(testing::values(a), testing::values(b));
}

TEST(RenderRasterTest, ZeroCutoffKeepsOnlyExactCenters) {
    const GaussianSet gs = scalar_set({{{0.0, 0.0}, 0.2, 0.2, 0.0}, {{0.3, 0.3}, 0.2, 0.2, 0.0}}, {1.0, 1.0});
    const auto out = render(gs, RenderPlan::at_points({{0.0, 0.0}, {0.1, 0.0}}, RasterStrategy{0.0}));
    EXPECT_NEAR(out.data()[0], density({0, 0}, 0.2, 0.2, 0.0, {0, 0}), 1e-12);
    EXPECT_EQ(out.data()[1], 0.0);
}

TEST(RenderRasterTest, TruncationErrorBoundedByTail) {
    // Dropped mass per Gaussian is at most F * norm * exp(-c^2 / 2).
    const GaussianSet gs = fitted_like(10, 10, 2, 10);
    const auto direct = render(gs, RenderPlan::at_scale(2.0, DirectStrategy{}));
    const auto raster = render(gs, RenderPlan::at_scale(2.0, RasterStrategy{3.0}));
    double bound = 0.0;
    for (std::size_t n = 0; n < gs.size(); ++n) {
        double fmax = 0.0;
        for (double v : gs.feature(n)) fmax = std::max(fmax, v);
        bound += fmax * gs.gaussian(n).norm * std::exp(-4.5);
    }
    for (std::size_t i = 0; i < direct.data().size(); ++i) {
        EXPECT_LE(raster.data()[i], direct.data()[i] + 1e-12);
        EXPECT_LE(direct.data()[i] - raster.data()[i], bound);
    }
}

TEST(RenderRasterTest, TiledGridMatchesPointwise) {
    const GaussianSet gs = fitted_like(9, 11, 2, 11);
    const auto grid = render(gs, RenderPlan::at_scale(3.0, RasterStrategy{2.0}));
    const auto pts = pixel_center_coords(grid.width(), grid.height());
    const auto pointwise = render(gs, RenderPlan::at_points(pts, RasterStrategy{2.0}));
    EXPECT_EQ(testing::values(grid), testing::values(pointwise));
}

TEST(RenderRasterTest, NegativeCutoffRejected) {
    const GaussianSet gs = fitted_like(3, 3, 1, 12);
    EXPECT_THROW(render(gs, RenderPlan::at_scale(1.0, RasterStrategy{-1.0})), ConfigError);
}

TEST(RenderVbgsTest, ZeroTemperatureAllGaussiansIsDirectOverN) {
    const auto src = testing::smooth_image(5, 4, 3, 13);
    RawGaussianParams raw = testing::random_raw(src.meta(), 14);
    raw.temperature = 0.0;
    const GaussianSet gs = constrain(raw, src);
    const auto ref = make_reference(src, 10, 8);
    const auto direct = render(gs, RenderPlan::at_scale(2.0, DirectStrategy{}));
    const auto vbgs = render(gs, RenderPlan::at_scale(2.0, VbgsStrategy{gs.size()}, ref));
    for (std::size_t i = 0; i < direct.data().size(); ++i)
        EXPECT_NEAR(vbgs.data()[i], direct.data()[i] / static_cast<double>(gs.size()), 1e-12);
}

TEST(RenderVbgsTest, SingleSelectionReturnsItsContribution) {
    const GaussianSet gs = fitted_like(6, 6, 2, 15);
    const GaussianGridIndex index = build_index(gs);
    const Point2 p{0.13, -0.41};
    const std::vector<double> ref = {0.2, 0.9};
    const auto sel = brute_force_top_k(gs, p, 1);
    const auto out = eval_point(gs, &index, p, VbgsStrategy{1}, ref);
    const auto expected = contribution(gs.gaussian(sel.indices[0]), gs.feature(sel.indices[0]), p);
    for (std::size_t b = 0; b < 2; ++b) EXPECT_NEAR(out[b], expected[b], 1e-14);
}

// Independent oracle: per-pixel brute force written out longhand.
TEST(RenderVbgsTest, MatchesScalarOracle) {
    const auto src = testing::smooth_image(16, 16, 3, 16);
    RawGaussianParams raw = testing::random_raw(src.meta(), 17);
    raw.temperature = 1.0;
    const GaussianSet gs = constrain(raw, src);
    const auto ref = make_reference(src, 32, 32);
    const auto out = render_vbgs(gs, build_index(gs), RenderPlan::at_scale(2.0, VbgsStrategy{16}, ref));
    const auto pts = pixel_center_coords(32, 32);
    for (std::size_t px = 0; px < pts.size(); ++px) {
        const Point2 p = pts[px];
        std::vector<std::pair<double, std::size_t>> d;
        for (std::size_t n = 0; n < gs.size(); ++n) {
            const Gaussian& g = gs.gaussian(n);
            const double dx = p.x - g.center.x, dy = p.y - g.center.y;
            const double det = g.cov.xx * g.cov.yy - g.cov.xy * g.cov.xy;
            const double q = (g.cov.yy * dx * dx - 2.0 * g.cov.xy * dx * dy + g.cov.xx * dy * dy) / det;
            d.emplace_back(q, n);
        }
        std::sort(d.begin(), d.end());
        const auto r = ref.spectrum(px);
        double rn = 0.0;
        for (double v : r) rn += v * v;
        std::vector<double> num(3, 0.0);
        double den = 0.0;
        for (std::size_t i = 0; i < 16; ++i) {
            const std::size_t n = d[i].second;
            const auto f = gs.feature(n);
            double dot = 0.0, fn = 0.0;
            for (std::size_t b = 0; b < 3; ++b) {
                dot += f[b] * r[b];
                fn += f[b] * f[b];
            }
            const double s = (fn < 1e-24 || rn < 1e-24) ? 0.0 : dot / std::sqrt(fn * rn);
            const double w = std::exp(1.0 * s);
            const Gaussian& g = gs.gaussian(n);
            const double sx = std::sqrt(g.cov.xx), sy = std::sqrt(g.cov.yy);
            const double k = density(g.center, sx, sy, g.cov.xy / (sx * sy), p);
            for (std::size_t b = 0; b < 3; ++b) num[b] += w * k * f[b];
            den += w;
        }
        for (std::size_t b = 0; b < 3; ++b)
            ASSERT_NEAR(out.at(b, px / 32, px % 32), num[b] / den, 1e-10 * std::max(1.0, std::abs(num[b] / den)))
                << "pixel " << px << " band " << b;
    }
}

TEST(RenderVbgsTest, IndexedAndBruteForceRendersAgree) {
    const GaussianSet gs = fitted_like(12, 10, 2, 18);
    const auto ref = make_reference(gs.base(), 30, 25);
    const auto plan = RenderPlan::at_scale(2.5, VbgsStrategy{8}, ref);
    const auto a = render_vbgs(gs, build_index(gs), plan);
    const auto b = render_vbgs(gs, nullptr, plan);
    EXPECT_EQ(testing::values(a), testing::values(b));
}

TEST(RenderVbgsTest, SimilarityGuardOnZeroVectors) {
    const std::vector<double> zero = {0.0, 0.0}, one = {1.0, 0.0};
    EXPECT_EQ(detail::cosine_similarity(zero, one), 0.0);
    EXPECT_EQ(detail::cosine_similarity(one, zero), 0.0);
    EXPECT_NEAR(detail::cosine_similarity(one, one), 1.0, 1e-15);
}

TEST(RenderVbgsTest, MissingReferenceIsConfigError) {
    const GaussianSet gs = fitted_like(4, 4, 2, 19);
    EXPECT_THROW(render(gs, RenderPlan::at_scale(2.0, VbgsStrategy{4})), ConfigError);
    EXPECT_THROW(eval_point(gs, nullptr, {0, 0}, VbgsStrategy{4}), ConfigError);
}

TEST(RenderVbgsTest, WrongReferenceShapeRejected) {
    const GaussianSet gs = fitted_like(4, 4, 2, 20);
    const auto ref = make_reference(gs.base(), 7, 8);
    EXPECT_THROW(render(gs, RenderPlan::at_scale(2.0, VbgsStrategy{4}, ref)), ShapeError);
}

TEST(RenderVbgsTest, ZeroKRejected) {
    const GaussianSet gs = fitted_like(4, 4, 1, 21);
    const auto ref = make_reference(gs.base(), 4, 4);
    EXPECT_THROW(render(gs, RenderPlan::at_scale(1.0, VbgsStrategy{0}, ref)), ConfigError);
}

TEST(EvalPointTest, BitExactAgainstGridRender) {
    const GaussianSet gs = fitted_like(7, 9, 3, 22);
    const GaussianGridIndex index = build_index(gs);
    const auto ref = make_reference(gs.base(), 21, 27);
    const std::vector<Strategy> strategies = {DirectStrategy{}, RasterStrategy{3.0}, VbgsStrategy{16}};
    for (const Strategy& s : strategies) {
        const auto img = render(gs, RenderPlan::at_scale(3.0, s, ref), &index);
        const auto pts = pixel_center_coords(21, 27);
        for (std::size_t px = 0; px < pts.size(); px += 5) {
            const auto v = eval_point(gs, &index, pts[px], s, ref.spectrum(px));
            for (std::size_t b = 0; b < 3; ++b) ASSERT_EQ(v[b], img.at(b, px / 21, px % 21));
        }
    }
}

TEST(EvalPointTest, OffGridAndOutsidePointsAreFinite) {
    const GaussianSet gs = fitted_like(6, 6, 2, 23);
    const GaussianGridIndex index = build_index(gs);
    const std::vector<double> ref = {0.5, 0.5};
    const std::vector<Point2> pts = {{0.0123, -0.777}, {1.5, 1.5}, {-3.0, 0.2}, {1.0, -1.0}};
    for (const Point2& p : pts) {
        const std::vector<Strategy> strategies = {DirectStrategy{}, RasterStrategy{3.0}, VbgsStrategy{5}};
        for (const Strategy& s : strategies)
            for (double v : eval_point(gs, &index, p, s, ref)) EXPECT_TRUE(std::isfinite(v));
    }
    const auto out = render(gs, RenderPlan::at_points(pts, VbgsStrategy{5}, MultiBandImage(ImageMeta{4, 1, 2, {}}, std::vector<double>(8, 0.5))), &index);
    EXPECT_EQ(out.width(), 4u);
    EXPECT_EQ(out.height(), 1u);
}

TEST(RenderTest, NonIntegerScalesProduceFloorExtent) {
    const GaussianSet gs = fitted_like(7, 5, 2, 24);
    const GaussianGridIndex index = build_index(gs);
    for (double r : {1.0, 1.5, 2.0, 3.7, 6.0, 8.0}) {
        const std::size_t w = static_cast<std::size_t>(std::floor(7 * r + 1e-9));
        const std::size_t h = static_cast<std::size_t>(std::floor(5 * r + 1e-9));
        const auto ref = make_reference(gs.base(), w, h);
        const std::vector<Strategy> strategies = {DirectStrategy{}, RasterStrategy{3.0}, VbgsStrategy{16}};
        for (const Strategy& s : strategies) {
            const auto out = render(gs, RenderPlan::at_scale(r, s, ref), &index);
            EXPECT_EQ(out.width(), w);
            EXPECT_EQ(out.height(), h);
            EXPECT_TRUE(out.all_finite());
        }
    }
}

TEST(RenderTest, EmptyPointListRejected) {
    const GaussianSet gs = fitted_like(3, 3, 1, 25);
    EXPECT_THROW(render(gs, RenderPlan::at_points({}, DirectStrategy{})), ConfigError);
}

TEST(RenderTest, ThreadCountDoesNotChangeOutput) {
    const GaussianSet gs = fitted_like(10, 10, 2, 26);
    const GaussianGridIndex index = build_index(gs);
    const auto ref = make_reference(gs.base(), 40, 40);
    const auto plan = RenderPlan::at_scale(4.0, VbgsStrategy{16}, ref);
    MultiBandImage a, b;
    {
        testing::ThreadsGuard one("1");
        a = render(gs, plan, &index);
    }
    {
        testing::ThreadsGuard four("4");
        b = render(gs, plan, &index);
    }
    EXPECT_EQ(testing::values(a), testing::values(b));
}

}  // namespace
}  // namespace vbgs
