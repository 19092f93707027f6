#include "lnca/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <stdexcept>

namespace lnca::inline LNCA_PRECISION {

namespace fs = std::filesystem;

ImageBatch image_at(const ImageBatch& batch, std::int64_t index) {
    const Dims4 d = dims4(batch, "image_at");
    if (index < 0 || index >= d.b) throw std::out_of_range("image index out of range");
    const std::int64_t per = d.h * d.w * d.c;
    ImageBatch out(Shape{1, d.h, d.w, d.c});
    std::copy_n(batch.ptr() + index * per, per, out.ptr());
    return out;
}

ImageBatch stack_images(const std::vector<ImageBatch>& images) {
    if (images.empty()) throw std::invalid_argument("stack_images: no images");
    const Dims4 d0 = dims4(images[0], "stack_images");
    std::int64_t total = 0;
    for (const auto& im : images) {
        const Dims4 d = dims4(im, "stack_images");
        if (d.h != d0.h || d.w != d0.w || d.c != d0.c)
            throw std::invalid_argument("stack_images: image sizes differ (" + shape_str(im.shape()) + " vs " +
                                        shape_str(images[0].shape()) + ")");
        total += d.b;
    }
    ImageBatch out(Shape{total, d0.h, d0.w, d0.c});
    std::int64_t off = 0;
    for (const auto& im : images) {
        std::copy_n(im.ptr(), im.numel(), out.ptr() + off);
        off += im.numel();
    }
    return out;
}

ImageBatch gather_images(const ImageBatch& batch, const std::vector<std::int64_t>& order) {
    const Dims4 d = dims4(batch, "gather_images");
    const std::int64_t per = d.h * d.w * d.c;
    ImageBatch out(Shape{static_cast<std::int64_t>(order.size()), d.h, d.w, d.c});
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (order[i] < 0 || order[i] >= d.b) throw std::out_of_range("gather_images: index out of range");
        std::copy_n(batch.ptr() + order[i] * per, per, out.ptr() + static_cast<std::int64_t>(i) * per);
    }
    return out;
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

std::string lower_ext(const fs::path& p) {
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
    return e;
}

ImageBatch read_png(const fs::path& path) {
    File f(std::fopen(path.c_str(), "rb"));
    if (!f) throw std::runtime_error("cannot open " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("malformed PNG: " + path.string());
    }
    png_init_io(png, f.get());
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_packing(png);
    png_set_expand(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    const auto w = png_get_image_width(png, info);
    const auto h = png_get_image_height(png, info);
    const auto rowbytes = png_get_rowbytes(png, info);
    if (rowbytes != w * 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("unsupported PNG layout: " + path.string());
    }
    std::vector<unsigned char> pixels(rowbytes * h);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = pixels.data() + y * rowbytes;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
    ImageBatch out(Shape{1, static_cast<std::int64_t>(h), static_cast<std::int64_t>(w), 3});
    for (std::size_t i = 0; i < pixels.size(); ++i) out[static_cast<std::int64_t>(i)] = real(pixels[i]) / real(255);
    return out;
}

std::uint8_t to_byte(real v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, real(0), real(1)) * 255));
}

void write_png(const fs::path& path, const ImageBatch& image) {
    const Dims4 d = dims4(image, "write_png");
    if (d.c != 1 && d.c != 3) throw std::invalid_argument("write_png expects 1 or 3 channels");
    File f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("cannot create " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("failed writing PNG: " + path.string());
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(d.w), static_cast<png_uint_32>(d.h), 8,
                 d.c == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<unsigned char> row(static_cast<std::size_t>(d.w * d.c));
    for (std::int64_t y = 0; y < d.h; ++y) {
        for (std::int64_t i = 0; i < d.w * d.c; ++i) row[static_cast<std::size_t>(i)] = to_byte(image[y * d.w * d.c + i]);
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

// Binary PPM (P6) / PGM (P5) with maxval <= 255.
ImageBatch read_pnm(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    auto token = [&] {
        std::string t;
        char ch;
        while (in.get(ch)) {
            if (ch == '#') {
                std::string skip;
                std::getline(in, skip);
            } else if (std::isspace(static_cast<unsigned char>(ch))) {
                if (!t.empty()) break;
            } else {
                t.push_back(ch);
            }
        }
        return t;
    };
    const std::string magic = token();
    if (magic != "P6" && magic != "P5") throw std::runtime_error("unsupported PNM format in " + path.string());
    const long w = std::stol(token()), h = std::stol(token()), maxval = std::stol(token());
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255)
        throw std::runtime_error("unsupported PNM header in " + path.string());
    const int src_c = magic == "P6" ? 3 : 1;
    std::vector<unsigned char> pixels(static_cast<std::size_t>(w * h * src_c));
    in.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    if (!in) throw std::runtime_error("truncated PNM data in " + path.string());
    ImageBatch out(Shape{1, h, w, 3});
    for (long i = 0; i < w * h; ++i)
        for (int c = 0; c < 3; ++c) out[i * 3 + c] = real(pixels[static_cast<std::size_t>(i * src_c + (src_c == 3 ? c : 0))]) / real(maxval);
    return out;
}

void write_pnm(const fs::path& path, const ImageBatch& image, bool gray) {
    const Dims4 d = dims4(image, "write_pnm");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot create " + path.string());
    out << (gray ? "P5" : "P6") << "\n" << d.w << " " << d.h << "\n255\n";
    for (std::int64_t i = 0; i < d.h * d.w; ++i) {
        if (gray) {
            real m = 0;
            for (std::int64_t c = 0; c < d.c; ++c) m += image[i * d.c + c];
            out.put(static_cast<char>(to_byte(m / real(d.c))));
        } else {
            for (std::int64_t c = 0; c < 3; ++c) out.put(static_cast<char>(to_byte(image[i * d.c + std::min(c, d.c - 1)])));
        }
    }
}

}  // namespace

ImageBatch read_image(const fs::path& path) {
    const std::string ext = lower_ext(path);
    if (ext == ".png") return read_png(path);
    if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") return read_pnm(path);
    throw std::runtime_error("unsupported image format: " + path.string());
}

void write_image(const fs::path& path, const ImageBatch& image) {
    const std::string ext = lower_ext(path);
    const ImageBatch first = image.dim(0) == 1 ? image : image_at(image, 0);
    if (ext == ".png") return write_png(path, first);
    if (ext == ".ppm") return write_pnm(path, first, false);
    if (ext == ".pgm") return write_pnm(path, first, true);
    throw std::runtime_error("unsupported image format: " + path.string());
}

void write_pgm(const fs::path& path, const Tensor& map, bool normalize) {
    std::int64_t h = 0, w = 0;
    if (map.rank() == 2) {
        h = map.dim(0);
        w = map.dim(1);
    } else {
        const Dims4 d = dims4(map, "write_pgm");
        if (d.b != 1 || d.c != 1) throw std::invalid_argument("write_pgm expects one single-channel map");
        h = d.h;
        w = d.w;
    }
    real mx = 0;
    for (real v : map.data()) mx = std::max(mx, std::abs(v));
    const real k = normalize && mx > 0 ? real(1) / mx : real(1);
    Tensor scaled(Shape{1, h, w, 1});
    for (std::int64_t i = 0; i < h * w; ++i) scaled[i] = std::abs(map[i]) * k;
    write_pnm(path, scaled, true);
}

std::vector<fs::path> list_images(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string ext = lower_ext(e.path());
        if (ext == ".png" || ext == ".ppm" || ext == ".pgm") out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace lnca
