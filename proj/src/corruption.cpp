#include "lnca/corruption.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "lnca/rng.hpp"

namespace lnca::inline LNCA_PRECISION {

std::string_view to_string(CorruptionKind kind) {
    return kind == CorruptionKind::kGaussianNoise ? "gaussian_noise" : "motion_blur";
}

CorruptionKind parse_corruption_kind(std::string_view name) {
    if (name == "gaussian_noise") return CorruptionKind::kGaussianNoise;
    if (name == "motion_blur") return CorruptionKind::kMotionBlur;
    throw std::invalid_argument("unknown corruption kind '" + std::string(name) + "'");
}

ImageBatch corrupt_noise(const ImageBatch& clean, const CorruptionSpec& spec) {
    if (!(spec.severity >= 0)) throw std::invalid_argument("noise severity must be >= 0");
    const Dims4 d = dims4(clean, "corrupt_noise");
    ImageBatch out = clean;
    if (spec.severity == 0) return out;
    Rng rng(derive_seed(spec.seed, {0x6e6f697365}));
    for (std::int64_t p = 0; p < d.cells(); ++p) {
        const real n = static_cast<real>(rng.normal() * spec.severity);
        for (std::int64_t c = 0; c < d.c; ++c) {
            real& v = out[p * d.c + c];
            v = std::clamp(v + n, real(0), real(1));
        }
    }
    return out;
}

Tensor motion_blur_kernel(int length, double angle) {
    if (length < 1) throw std::invalid_argument("blur length must be >= 1");
    const double half = (length - 1) / 2.0;
    const double cx = std::cos(angle), cy = std::sin(angle);
    int radius = 0;
    std::vector<std::pair<int, int>> taps;
    for (int i = 0; i < length; ++i) {
        const double t = i - half;
        const int dx = static_cast<int>(std::lround(t * cx));
        const int dy = static_cast<int>(std::lround(t * cy));
        radius = std::max({radius, std::abs(dx), std::abs(dy)});
        taps.emplace_back(dy, dx);
    }
    const int k = 2 * radius + 1;
    Tensor kernel(Shape{k, k});
    for (auto [dy, dx] : taps) kernel[(dy + radius) * k + dx + radius] += real(1);
    for (real& v : kernel.data()) v /= real(length);
    return kernel;
}

ImageBatch apply_kernel(const ImageBatch& images, const Tensor& kernel) {
    const Dims4 d = dims4(images, "apply_kernel");
    if (kernel.rank() != 2 || kernel.dim(0) != kernel.dim(1) || kernel.dim(0) % 2 == 0)
        throw std::invalid_argument("apply_kernel expects an odd square kernel, got " + shape_str(kernel.shape()));
    const std::int64_t k = kernel.dim(0), r = k / 2;
    ImageBatch out(images.shape());
    for (std::int64_t b = 0; b < d.b; ++b)
        for (std::int64_t y = 0; y < d.h; ++y)
            for (std::int64_t x = 0; x < d.w; ++x)
                for (std::int64_t c = 0; c < d.c; ++c) {
                    double acc = 0;
                    for (std::int64_t i = 0; i < k; ++i) {
                        const std::int64_t sy = std::clamp(y + i - r, std::int64_t{0}, d.h - 1);
                        for (std::int64_t j = 0; j < k; ++j) {
                            const real w = kernel[i * k + j];
                            if (w == 0) continue;
                            const std::int64_t sx = std::clamp(x + j - r, std::int64_t{0}, d.w - 1);
                            acc += double(w) * images.at(b, sy, sx, c);
                        }
                    }
                    out.at(b, y, x, c) = static_cast<real>(std::clamp(acc, 0.0, 1.0));
                }
    return out;
}

ImageBatch corrupt_blur(const ImageBatch& clean, const CorruptionSpec& spec) {
    if (!(spec.severity >= 0)) throw std::invalid_argument("blur severity must be >= 0");
    const Dims4 d = dims4(clean, "corrupt_blur");
    const int length = static_cast<int>(std::lround(spec.severity));
    if (length <= 1) return clean;
    if (length > std::min(d.h, d.w))
        throw std::invalid_argument("blur length " + std::to_string(length) + " exceeds image size " +
                                    std::to_string(d.h) + "x" + std::to_string(d.w));
    Rng rng(derive_seed(spec.seed, {0x626c7572}));
    return apply_kernel(clean, motion_blur_kernel(length, rng.uniform(0.0, std::numbers::pi)));
}

ImageBatch corrupt(const ImageBatch& clean, const CorruptionSpec& spec) {
    return spec.kind == CorruptionKind::kGaussianNoise ? corrupt_noise(clean, spec) : corrupt_blur(clean, spec);
}

std::vector<std::int64_t> derangement(std::int64_t n, std::uint64_t seed) {
    if (n < 2) throw std::invalid_argument("derangement needs at least 2 elements, got " + std::to_string(n));
    Rng rng(derive_seed(seed, {0x646572}));
    std::vector<std::int64_t> perm(static_cast<std::size_t>(n));
    for (;;) {
        std::iota(perm.begin(), perm.end(), 0);
        for (std::int64_t i = n - 1; i > 0; --i)
            std::swap(perm[static_cast<std::size_t>(i)], perm[rng.below(static_cast<std::uint64_t>(i + 1))]);
        bool fixed = false;
        for (std::int64_t i = 0; i < n && !fixed; ++i) fixed = perm[static_cast<std::size_t>(i)] == i;
        if (!fixed) return perm;
    }
}

ImageBatch derange(const ImageBatch& batch, std::uint64_t seed) {
    return gather_images(batch, derangement(dims4(batch, "derange").b, seed));
}

ImageBatch change_mask(const ImageBatch& a, const ImageBatch& b) {
    if (a.shape() != b.shape()) throw std::invalid_argument("change_mask: shape mismatch");
    ImageBatch m(a.shape());
    for (std::int64_t i = 0; i < a.numel(); ++i) m[i] = a[i] != b[i] ? real(1) : real(0);
    return m;
}

TripletBatch make_triplets(const ImageBatch& clean, const CorruptionSpec& spec) {
    TripletBatch t;
    t.anchor = clean;
    t.positive = corrupt(clean, spec);
    t.negative = derange(clean, derive_seed(spec.seed, {0x6e6567}));
    t.mask = change_mask(t.anchor, t.positive);
    return t;
}

ImageBatch resize_bilinear(const ImageBatch& images, std::int64_t out_h, std::int64_t out_w) {
    const Dims4 d = dims4(images, "resize_bilinear");
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize_bilinear: empty output size");
    ImageBatch out(Shape{d.b, out_h, out_w, d.c});
    // Half-pixel centres, clamped at the border.
    const double sy = double(d.h) / out_h, sx = double(d.w) / out_w;
    for (std::int64_t y = 0; y < out_h; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, double(d.h - 1));
        const auto y0 = static_cast<std::int64_t>(fy);
        const std::int64_t y1 = std::min(y0 + 1, d.h - 1);
        const double wy = fy - y0;
        for (std::int64_t x = 0; x < out_w; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, double(d.w - 1));
            const auto x0 = static_cast<std::int64_t>(fx);
            const std::int64_t x1 = std::min(x0 + 1, d.w - 1);
            const double wx = fx - x0;
            for (std::int64_t b = 0; b < d.b; ++b)
                for (std::int64_t c = 0; c < d.c; ++c) {
                    const double top = (1 - wx) * images.at(b, y0, x0, c) + wx * images.at(b, y0, x1, c);
                    const double bot = (1 - wx) * images.at(b, y1, x0, c) + wx * images.at(b, y1, x1, c);
                    out.at(b, y, x, c) = static_cast<real>((1 - wy) * top + wy * bot);
                }
        }
    }
    return out;
}

ImageBatch tile_shrink_clean(const ImageBatch& image, int rows, int cols, std::int64_t out_h, std::int64_t out_w,
                             double dedup_threshold) {
    if (rows < 1 || cols < 1) throw std::invalid_argument("tile grid must be at least 1x1");
    const Dims4 d = dims4(image, "tile_shrink_clean");
    if (d.b != 1) throw std::invalid_argument("tile_shrink_clean expects a single image");
    if (d.h < rows * out_h || d.w < cols * out_w)
        throw std::invalid_argument("image " + shape_str(image.shape()) + " smaller than tile grid x output size");
    const std::int64_t th = d.h / rows, tw = d.w / cols;
    std::vector<ImageBatch> kept;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            ImageBatch tile(Shape{1, th, tw, d.c});
            for (std::int64_t y = 0; y < th; ++y)
                std::copy_n(image.ptr() + ((r * th + y) * d.w + c * tw) * d.c, tw * d.c, tile.ptr() + y * tw * d.c);
            ImageBatch small = resize_bilinear(tile, out_h, out_w);
            const bool duplicate = std::any_of(kept.begin(), kept.end(), [&](const ImageBatch& k) {
                double acc = 0;
                for (std::int64_t i = 0; i < k.numel(); ++i) acc += std::pow(double(k[i]) - small[i], 2);
                return acc / double(k.numel()) < dedup_threshold;
            });
            if (!duplicate) kept.push_back(std::move(small));
        }
    return stack_images(kept);
}

double curriculum_severity(int epoch, int total_epochs, double min_sev, double max_sev) {
    if (total_epochs < 1 || epoch < 0 || epoch >= total_epochs)
        throw std::out_of_range("curriculum epoch " + std::to_string(epoch) + " outside [0, " +
                                std::to_string(total_epochs) + ")");
    if (min_sev > max_sev) throw std::invalid_argument("curriculum min severity exceeds max");
    if (total_epochs == 1) return max_sev;
    return min_sev + (max_sev - min_sev) * double(epoch) / double(total_epochs - 1);
}

}  // namespace lnca
