#include "lnca/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace lnca::inline LNCA_PRECISION {

std::vector<double> gaussian_window(int size, double sigma) {
    if (size < 1 || sigma <= 0) throw std::invalid_argument("gaussian window needs size >= 1 and sigma > 0");
    std::vector<double> w(static_cast<std::size_t>(size));
    const double mid = (size - 1) / 2.0;
    double total = 0;
    for (int i = 0; i < size; ++i) total += w[static_cast<std::size_t>(i)] = std::exp(-(i - mid) * (i - mid) / (2 * sigma * sigma));
    for (double& v : w) v /= total;
    return w;
}

namespace {

// Valid-mode separable filtering of one channel plane.
std::vector<double> filter(const std::vector<double>& plane, std::int64_t h, std::int64_t w, const std::vector<double>& g) {
    const auto k = static_cast<std::int64_t>(g.size());
    const std::int64_t oh = h - k + 1, ow = w - k + 1;
    std::vector<double> rows(static_cast<std::size_t>(h * ow));
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < ow; ++x) {
            double acc = 0;
            for (std::int64_t i = 0; i < k; ++i) acc += g[static_cast<std::size_t>(i)] * plane[static_cast<std::size_t>(y * w + x + i)];
            rows[static_cast<std::size_t>(y * ow + x)] = acc;
        }
    std::vector<double> out(static_cast<std::size_t>(oh * ow));
    for (std::int64_t y = 0; y < oh; ++y)
        for (std::int64_t x = 0; x < ow; ++x) {
            double acc = 0;
            for (std::int64_t i = 0; i < k; ++i) acc += g[static_cast<std::size_t>(i)] * rows[static_cast<std::size_t>((y + i) * ow + x)];
            out[static_cast<std::size_t>(y * ow + x)] = acc;
        }
    return out;
}

}  // namespace

SSIMResult ssim(const ImageBatch& x, const ImageBatch& y, const SSIMConfig& cfg) {
    if (x.shape() != y.shape())
        throw std::invalid_argument("ssim: shape mismatch " + shape_str(x.shape()) + " vs " + shape_str(y.shape()));
    const Dims4 d = dims4(x, "ssim");
    if (cfg.window > d.h || cfg.window > d.w)
        throw std::invalid_argument("ssim: window " + std::to_string(cfg.window) + " larger than image " +
                                    std::to_string(d.h) + "x" + std::to_string(d.w));
    const auto g = gaussian_window(cfg.window, cfg.sigma);
    const double c1 = cfg.c1(), c2 = cfg.c2();
    const std::size_t n = static_cast<std::size_t>(d.h * d.w);
    SSIMResult r;
    for (std::int64_t b = 0; b < d.b; ++b) {
        double total = 0;
        std::size_t count = 0;
        for (std::int64_t c = 0; c < d.c; ++c) {
            std::vector<double> px(n), py(n), pxx(n), pyy(n), pxy(n);
            for (std::size_t i = 0; i < n; ++i) {
                const double a = x[(b * static_cast<std::int64_t>(n) + static_cast<std::int64_t>(i)) * d.c + c];
                const double v = y[(b * static_cast<std::int64_t>(n) + static_cast<std::int64_t>(i)) * d.c + c];
                px[i] = a;
                py[i] = v;
                pxx[i] = a * a;
                pyy[i] = v * v;
                pxy[i] = a * v;
            }
            const auto mx = filter(px, d.h, d.w, g), my = filter(py, d.h, d.w, g);
            const auto sxx = filter(pxx, d.h, d.w, g), syy = filter(pyy, d.h, d.w, g), sxy = filter(pxy, d.h, d.w, g);
            for (std::size_t i = 0; i < mx.size(); ++i) {
                const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cov = sxy[i] - mx[i] * my[i];
                total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
                         ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
                ++count;
            }
        }
        r.per_image.push_back(total / static_cast<double>(count));
    }
    double s = 0;
    for (double v : r.per_image) s += v;
    r.mean = s / static_cast<double>(r.per_image.size());
    return r;
}

std::vector<ErrorMetrics> psnr_mse(const ImageBatch& x, const ImageBatch& y, double peak) {
    if (x.shape() != y.shape()) throw std::invalid_argument("psnr_mse: shape mismatch");
    const Dims4 d = dims4(x, "psnr_mse");
    const std::int64_t per = d.h * d.w * d.c;
    std::vector<ErrorMetrics> out;
    for (std::int64_t b = 0; b < d.b; ++b) {
        double acc = 0;
        for (std::int64_t i = 0; i < per; ++i) {
            const double e = double(x[b * per + i]) - double(y[b * per + i]);
            acc += e * e;
        }
        ErrorMetrics m;
        m.mse = acc / double(per);
        m.psnr = m.mse == 0 ? std::numeric_limits<double>::infinity() : 10 * std::log10(peak * peak / m.mse);
        out.push_back(m);
    }
    return out;
}

}  // namespace lnca
