#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lnca/corruption.hpp"

namespace lnca::inline LNCA_PRECISION {

/// Images of one folder, all of the same size, with their file names.
struct Dataset {
    ImageBatch images;
    std::vector<std::string> names;

    std::int64_t size() const { return static_cast<std::int64_t>(names.size()); }
};

/// One line of a dataset manifest (JSON lines).
struct ManifestEntry {
    std::string path;
    std::string split;
    CorruptionKind kind = CorruptionKind::kGaussianNoise;
    double severity = 0;
    std::uint64_t seed = 0;

    bool operator==(const ManifestEntry&) const = default;
};

/// Loads every image of `dir`; throws if the folder is empty or sizes differ.
Dataset load_image_folder(const std::filesystem::path& dir);
void save_image_folder(const std::filesystem::path& dir, const Dataset& data);

/// Smooth synthetic scenes (gradient background with soft discs and bars).
Dataset synthesize_toy_images(int count, std::int64_t height, std::int64_t width, std::uint64_t seed);

/// Writes clean/ and corrupted/ copies of `data` plus manifest.jsonl under
/// `out_dir`. Image i is corrupted with seed derive_seed(spec.seed, {i}).
std::vector<ManifestEntry> make_dataset(const Dataset& data, const CorruptionSpec& spec,
                                        const std::filesystem::path& out_dir, const std::string& split = "train");

/// Corrupts a whole batch with per-image seeds, as make_dataset does.
ImageBatch corrupt_per_image(const ImageBatch& clean, const CorruptionSpec& spec);

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

}  // namespace lnca
