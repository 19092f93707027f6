#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lnca/image.hpp"

namespace lnca::inline LNCA_PRECISION {

enum class CorruptionKind { kGaussianNoise, kMotionBlur };

std::string_view to_string(CorruptionKind kind);
/// Accepts "gaussian_noise" / "motion_blur"; throws std::invalid_argument otherwise.
CorruptionKind parse_corruption_kind(std::string_view name);

/// Severity is the noise sigma (value units) or the blur length in pixels.
struct CorruptionSpec {
    CorruptionKind kind = CorruptionKind::kGaussianNoise;
    double severity = 0.1;
    std::uint64_t seed = 0;
};

/// Anchor is the clean batch, positive its corruption, negative a derangement
/// of the anchor. mask is 1 wherever anchor and positive differ.
struct TripletBatch {
    ImageBatch anchor;
    ImageBatch positive;
    ImageBatch negative;
    ImageBatch mask;
};

/// One N(0, severity^2) sample per pixel, added to every channel, clipped to [0,1].
ImageBatch corrupt_noise(const ImageBatch& clean, const CorruptionSpec& spec);
/// Convolves all images and channels with one seeded line kernel (clamp-to-edge).
ImageBatch corrupt_blur(const ImageBatch& clean, const CorruptionSpec& spec);
ImageBatch corrupt(const ImageBatch& clean, const CorruptionSpec& spec);

/// Normalized [K,K] kernel of a line with `length` samples at `angle` radians,
/// rasterized to the nearest pixel. K is the smallest odd size holding it.
Tensor motion_blur_kernel(int length, double angle);
/// Applies a [K,K] kernel (K odd) to every channel with clamp-to-edge borders.
ImageBatch apply_kernel(const ImageBatch& images, const Tensor& kernel);

/// Uniformly sampled permutation without fixed points (n >= 2).
std::vector<std::int64_t> derangement(std::int64_t n, std::uint64_t seed);
ImageBatch derange(const ImageBatch& batch, std::uint64_t seed);

ImageBatch change_mask(const ImageBatch& a, const ImageBatch& b);
TripletBatch make_triplets(const ImageBatch& clean, const CorruptionSpec& spec);

ImageBatch resize_bilinear(const ImageBatch& images, std::int64_t out_h, std::int64_t out_w);
/// Splits one image into a rows x cols grid, resizes each tile to out_h x out_w
/// and drops tiles whose MSE to an already kept tile is below dedup_threshold.
ImageBatch tile_shrink_clean(const ImageBatch& image, int rows, int cols, std::int64_t out_h = 32,
                             std::int64_t out_w = 32, double dedup_threshold = 1e-3);

/// Linear ramp from min_sev at epoch 0 to max_sev at the last epoch.
double curriculum_severity(int epoch, int total_epochs, double min_sev, double max_sev);

}  // namespace lnca
