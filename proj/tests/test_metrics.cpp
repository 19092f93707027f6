#include <doctest.h>

#include <cmath>
#include <limits>

#include "lnca/metrics.hpp"
#include "support/gradcheck.hpp"

using namespace lnca;
using lnca::testing::random_tensor;

namespace {

// Direct 2-D windowed SSIM (Wang et al. form, valid windows, one channel at a
// time), written independently of the separable implementation.
double naive_ssim(const ImageBatch& x, const ImageBatch& y, std::int64_t b, const SSIMConfig& cfg) {
    const Dims4 d = dims4(x, "naive_ssim");
    const int k = cfg.window;
    std::vector<double> g(static_cast<std::size_t>(k));
    double gs = 0;
    for (int i = 0; i < k; ++i) {
        const double t = i - (k - 1) / 2.0;
        g[i] = std::exp(-t * t / (2 * cfg.sigma * cfg.sigma));
        gs += g[i];
    }
    const double c1 = std::pow(cfg.k1 * cfg.dynamic_range, 2), c2 = std::pow(cfg.k2 * cfg.dynamic_range, 2);
    double total = 0;
    std::int64_t count = 0;
    for (std::int64_t c = 0; c < d.c; ++c)
        for (std::int64_t oy = 0; oy + k <= d.h; ++oy)
            for (std::int64_t ox = 0; ox + k <= d.w; ++ox) {
                double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
                for (int i = 0; i < k; ++i)
                    for (int j = 0; j < k; ++j) {
                        const double w = g[i] * g[j] / (gs * gs);
                        const double a = x.at(b, oy + i, ox + j, c), v = y.at(b, oy + i, ox + j, c);
                        mx += w * a;
                        my += w * v;
                        sxx += w * a * a;
                        syy += w * v * v;
                        sxy += w * a * v;
                    }
                const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
                total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                ++count;
            }
    return total / double(count);
}

ImageBatch constant(std::int64_t h, std::int64_t w, double v) { return ImageBatch(Shape{1, h, w, 3}, real(v)); }

}  // namespace

TEST_CASE("gaussian window is normalised and symmetric") {
    const auto g = gaussian_window(11, 1.5);
    REQUIRE(g.size() == 11);
    double s = 0;
    for (double v : g) s += v;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-15));
    for (int i = 0; i < 5; ++i) CHECK(g[i] == doctest::Approx(g[10 - i]).epsilon(1e-15));
    CHECK(std::max_element(g.begin(), g.end()) - g.begin() == 5);
    SSIMConfig cfg;
    CHECK(cfg.c1() > 0);
    CHECK(cfg.c2() > 0);
}

TEST_CASE("ssim identity, symmetry and range") {
    Rng rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        const ImageBatch x = random_tensor({2, 16, 20, 3}, rng, 0, 1);
        const ImageBatch y = random_tensor({2, 16, 20, 3}, rng, 0, 1);
        const SSIMResult self = ssim(x, x);
        for (double v : self.per_image) CHECK(std::abs(v - 1.0) <= 1e-9);
        const SSIMResult xy = ssim(x, y), yx = ssim(y, x);
        for (std::size_t i = 0; i < xy.per_image.size(); ++i) {
            CHECK(std::abs(xy.per_image[i] - yx.per_image[i]) <= 1e-9);
            CHECK(xy.per_image[i] >= -1);
            CHECK(xy.per_image[i] <= 1);
        }
        CHECK(xy.mean == doctest::Approx((xy.per_image[0] + xy.per_image[1]) / 2));
    }
}

TEST_CASE("ssim of constant images matches the closed form") {
    const SSIMConfig cfg;
    for (auto [a, b] : {std::pair{0.2, 0.7}, {0.5, 0.5}, {0.0, 1.0}, {0.9, 0.35}}) {
        // Variances vanish, so the contrast-structure factor is c2 / c2 = 1.
        const double expect = (2 * a * b + cfg.c1()) / (a * a + b * b + cfg.c1());
        // Image values are stored in `real`; feed the stored values to the formula.
        const double ar = real(a), br = real(b);
        const double stored = (2 * ar * br + cfg.c1()) / (ar * ar + br * br + cfg.c1());
        const double got = ssim(constant(12, 12, a), constant(12, 12, b)).mean;
        CHECK(std::abs(got - stored) <= 1e-9);
        CHECK(got == doctest::Approx(expect).epsilon(1e-6));
    }
}

TEST_CASE("ssim matches a direct 2-D window evaluation") {
    Rng rng(12);
    const ImageBatch x = random_tensor({2, 15, 13, 3}, rng, 0, 1);
    ImageBatch y = x;
    for (real& v : y.data()) v = std::clamp(v + static_cast<real>(rng.normal() * 0.1), real(0), real(1));
    SSIMConfig small;
    small.window = 7;
    small.sigma = 1.0;
    for (const SSIMConfig& cfg : {SSIMConfig{}, small}) {
        const SSIMResult r = ssim(x, y, cfg);
        for (std::int64_t b = 0; b < 2; ++b) CHECK(std::abs(r.per_image[b] - naive_ssim(x, y, b, cfg)) <= 1e-9);
    }
}

TEST_CASE("ssim of a binary image against its inverse is negative") {
    ImageBatch x(Shape{1, 16, 16, 3});
    for (std::int64_t yy = 0; yy < 16; ++yy)
        for (std::int64_t xx = 0; xx < 16; ++xx)
            for (std::int64_t c = 0; c < 3; ++c) x.at(0, yy, xx, c) = ((xx / 2 + yy / 3) % 2) ? real(1) : real(0);
    ImageBatch inv = x;
    for (real& v : inv.data()) v = 1 - v;
    const double s = ssim(x, inv).mean;
    CHECK(s < 0);
    CHECK(std::abs(s - naive_ssim(x, inv, 0, {})) <= 1e-9);
}

TEST_CASE("ssim barely moves under a shared shift of mid-range images") {
    Rng rng(13);
    const ImageBatch x = random_tensor({1, 16, 16, 3}, rng, 0.3, 0.6);
    ImageBatch y = x;
    for (real& v : y.data()) v += static_cast<real>(rng.normal() * 0.02);
    ImageBatch xs = x, ys = y;
    for (real& v : xs.data()) v += real(0.05);
    for (real& v : ys.data()) v += real(0.05);
    // Only the luminance factor depends on the means and its stabilised
    // ratio stays near 1 when both local means agree to within the noise.
    CHECK(std::abs(ssim(x, y).mean - ssim(xs, ys).mean) < 1e-4);
    // Identical images stay exactly invariant.
    CHECK(std::abs(ssim(xs, xs).mean - ssim(x, x).mean) <= 1e-12);
}

TEST_CASE("ssim errors") {
    CHECK_THROWS_AS(ssim(constant(12, 12, 0.1), constant(12, 13, 0.1)), std::invalid_argument);
    CHECK_THROWS_AS(ssim(constant(8, 8, 0.1), constant(8, 8, 0.1)), std::invalid_argument);
}

TEST_CASE("psnr and mse") {
    const ImageBatch zeros = constant(4, 4, 0), ones = constant(4, 4, 1);
    const auto same = psnr_mse(zeros, zeros);
    CHECK(same[0].mse == 0);
    CHECK(same[0].psnr == std::numeric_limits<double>::infinity());
    const auto opposite = psnr_mse(zeros, ones);
    CHECK(opposite[0].mse == 1);
    CHECK(opposite[0].psnr == 0);

    Rng rng(14);
    const ImageBatch x = random_tensor({3, 7, 5, 3}, rng, 0, 1), y = random_tensor({3, 7, 5, 3}, rng, 0, 1);
    const auto e = psnr_mse(x, y);
    const std::int64_t per = 7 * 5 * 3;
    for (std::int64_t b = 0; b < 3; ++b) {
        double s = 0;
        for (std::int64_t i = 0; i < per; ++i) s += std::pow(double(x[b * per + i]) - double(y[b * per + i]), 2);
        const double mse = s / double(per);
        CHECK(e[b].mse == doctest::Approx(mse).epsilon(1e-12));
        CHECK(e[b].psnr == doctest::Approx(10 * std::log10(1.0 / mse)).epsilon(1e-12));
    }
}
