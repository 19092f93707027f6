#include "lnca/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "lnca/rng.hpp"
#include "lnca/version.hpp"

namespace lnca::inline LNCA_PRECISION {

namespace fs = std::filesystem;
using nlohmann::json;

Dataset load_image_folder(const fs::path& dir) {
    const auto files = list_images(dir);
    if (files.empty()) throw std::runtime_error("no images in " + dir.string());
    std::vector<ImageBatch> images;
    Dataset out;
    for (const auto& f : files) {
        images.push_back(read_image(f));
        out.names.push_back(f.filename().string());
    }
    out.images = stack_images(images);
    return out;
}

void save_image_folder(const fs::path& dir, const Dataset& data) {
    fs::create_directories(dir);
    for (std::int64_t i = 0; i < data.size(); ++i)
        write_image(dir / data.names[static_cast<std::size_t>(i)], image_at(data.images, i));
}

Dataset synthesize_toy_images(int count, std::int64_t height, std::int64_t width, std::uint64_t seed) {
    if (count < 1 || height < 1 || width < 1) throw std::invalid_argument("toy dataset needs a positive size");
    Dataset out;
    out.images = Tensor(Shape{count, height, width, 3});
    for (int n = 0; n < count; ++n) {
        Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(n)}));
        double base[3], gx[3], gy[3];
        for (int c = 0; c < 3; ++c) {
            base[c] = rng.uniform(0.25, 0.75);
            gx[c] = rng.uniform(-0.3, 0.3);
            gy[c] = rng.uniform(-0.3, 0.3);
        }
        struct Disc {
            double cy, cx, r, col[3];
        };
        std::vector<Disc> discs(static_cast<std::size_t>(rng.between(1, 3)));
        for (auto& d : discs) {
            d.cy = rng.uniform(0.2, 0.8) * height;
            d.cx = rng.uniform(0.2, 0.8) * width;
            d.r = rng.uniform(0.12, 0.3) * std::min(height, width);
            for (double& c : d.col) c = rng.uniform(0.05, 0.95);
        }
        const bool bar = rng.bernoulli(0.5);
        const double bar_pos = rng.uniform(0.2, 0.8) * height, bar_w = rng.uniform(2.0, 5.0);
        double bar_col[3];
        for (double& c : bar_col) c = rng.uniform(0.0, 1.0);

        for (std::int64_t y = 0; y < height; ++y)
            for (std::int64_t x = 0; x < width; ++x) {
                const double u = double(x) / width - 0.5, v = double(y) / height - 0.5;
                double px[3];
                for (int c = 0; c < 3; ++c) px[c] = base[c] + gx[c] * u + gy[c] * v;
                if (bar) {
                    const double a = std::clamp(bar_w / 2 - std::abs(y + 0.5 - bar_pos) + 0.5, 0.0, 1.0);
                    for (int c = 0; c < 3; ++c) px[c] = (1 - a) * px[c] + a * bar_col[c];
                }
                for (const auto& d : discs) {
                    // One-pixel soft edge.
                    const double dist = std::hypot(y + 0.5 - d.cy, x + 0.5 - d.cx);
                    const double a = std::clamp(d.r - dist + 0.5, 0.0, 1.0);
                    for (int c = 0; c < 3; ++c) px[c] = (1 - a) * px[c] + a * d.col[c];
                }
                for (int c = 0; c < 3; ++c) out.images.at(n, y, x, c) = static_cast<real>(std::clamp(px[c], 0.0, 1.0));
            }
        char name[32];
        std::snprintf(name, sizeof name, "toy_%02d.png", n);
        out.names.emplace_back(name);
    }
    return out;
}

ImageBatch corrupt_per_image(const ImageBatch& clean, const CorruptionSpec& spec) {
    const Dims4 d = dims4(clean, "corrupt_per_image");
    std::vector<ImageBatch> parts;
    for (std::int64_t i = 0; i < d.b; ++i) {
        CorruptionSpec s = spec;
        s.seed = derive_seed(spec.seed, {static_cast<std::uint64_t>(i)});
        parts.push_back(corrupt(image_at(clean, i), s));
    }
    return stack_images(parts);
}

std::vector<ManifestEntry> make_dataset(const Dataset& data, const CorruptionSpec& spec, const fs::path& out_dir,
                                        const std::string& split) {
    const ImageBatch corrupted = corrupt_per_image(data.images, spec);
    save_image_folder(out_dir / "clean", data);
    save_image_folder(out_dir / "corrupted", Dataset{corrupted, data.names});
    std::vector<ManifestEntry> entries;
    for (std::int64_t i = 0; i < data.size(); ++i)
        entries.push_back({"corrupted/" + data.names[static_cast<std::size_t>(i)], split, spec.kind, spec.severity,
                           derive_seed(spec.seed, {static_cast<std::uint64_t>(i)})});
    write_manifest(out_dir / "manifest.jsonl", entries);
    return entries;
}

void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot create " + path.string());
    for (const auto& e : entries) {
        const json line = {{"schema_version", kSchemaVersion},
                           {"path", e.path},
                           {"split", e.split},
                           {"corruption_kind", std::string(to_string(e.kind))},
                           {"severity", e.severity},
                           {"seed", e.seed}};
        out << line.dump() << "\n";
    }
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<ManifestEntry> entries;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        entries.push_back({j.at("path").get<std::string>(), j.at("split").get<std::string>(),
                           parse_corruption_kind(j.at("corruption_kind").get<std::string>()),
                           j.at("severity").get<double>(), j.at("seed").get<std::uint64_t>()});
    }
    return entries;
}

}  // namespace lnca
