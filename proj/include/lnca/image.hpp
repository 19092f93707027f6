#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lnca/tensor.hpp"

namespace lnca::inline LNCA_PRECISION {

/// Batch of images, BHWC with values in [0, 1].
using ImageBatch = Tensor;

/// Copies image `index` of a batch out as a batch of one.
ImageBatch image_at(const ImageBatch& batch, std::int64_t index);
/// Stacks batches (of equal H, W, C) along the batch axis.
ImageBatch stack_images(const std::vector<ImageBatch>& images);
/// Rows of `batch` in the given order.
ImageBatch gather_images(const ImageBatch& batch, const std::vector<std::int64_t>& order);

/// Reads PNG (8/16-bit gray, RGB, RGBA) or binary PPM/PGM into a [1,H,W,3]
/// batch. Gray inputs are replicated to three channels; alpha is dropped.
ImageBatch read_image(const std::filesystem::path& path);
/// Writes image 0 of `image` as 8-bit PNG, or PPM/PGM by extension.
void write_image(const std::filesystem::path& path, const ImageBatch& image);
/// Writes a single-channel [H,W] or [1,H,W,1] map as 8-bit PGM, scaled by 1/max.
void write_pgm(const std::filesystem::path& path, const Tensor& map, bool normalize = true);

/// Sorted list of *.png / *.ppm / *.pgm files in a directory.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace lnca
