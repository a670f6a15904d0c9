#include "poselab/util/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>

#include "poselab/util/error.hpp"

namespace poselab {

namespace {
struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;
}  // namespace

void write_png(const std::string& path, const Image8& img) {
    require(img.channels == 1 || img.channels == 3,
            "png: unsupported channel count ", img.channels);
    require(img.w > 0 && img.h > 0 &&
                img.pixels.size() == std::size_t(img.w) * img.h * img.channels,
            "png: inconsistent image buffer for ", path);
    std::filesystem::path fp(path);
    if (fp.has_parent_path()) std::filesystem::create_directories(fp.parent_path());
    FilePtr f(std::fopen(path.c_str(), "wb"));
    require(f != nullptr, "png: cannot open ", path, " for writing");

    png_structp png =
        png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    require(png, "png: allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail("png: allocation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail("png: write error for ", path);
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, png_uint_32(img.w), png_uint_32(img.h), 8,
                 img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(std::size_t(img.h));
    for (int y = 0; y < img.h; ++y)
        rows[std::size_t(y)] = const_cast<png_bytep>(
            img.pixels.data() + std::size_t(y) * img.w * img.channels);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image8 read_png(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    require(f != nullptr, "png: cannot open ", path);
    png_structp png =
        png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    require(png, "png: allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail("png: allocation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail("png: read error for ", path);
    }
    png_init_io(png, f.get());
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);

    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    int channels = int(png_get_channels(png, info));
    require(channels == 1 || channels == 3, "png: unsupported channels in ",
            path);

    Image8 img;
    img.w = int(w);
    img.h = int(h);
    img.channels = channels;
    img.pixels.resize(std::size_t(w) * h * channels);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y)
        rows[y] = img.pixels.data() + std::size_t(y) * w * channels;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

Image8 tensor_to_rgb8(const Tensor& t) {
    require(t.ndim() == 3 && t.dim(0) == 3, "image: expected [3,H,W], got ",
            t.shape_str());
    Image8 img;
    img.h = t.dim(1);
    img.w = t.dim(2);
    img.channels = 3;
    img.pixels.resize(std::size_t(img.w) * img.h * 3);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c) {
                double v = std::lround(t.at3(c, y, x));
                img.at(y, x, c) = uint8_t(std::min(255.0, std::max(0.0, v)));
            }
    return img;
}

Tensor rgb8_to_tensor(const Image8& img) {
    require(img.channels == 3, "image: expected RGB, got ", img.channels,
            " channels");
    Tensor t = Tensor::zeros({3, img.h, img.w});
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c) t.at3(c, y, x) = double(img.at(y, x, c));
    return t;
}

Image8 mask_to_gray8(const std::vector<uint8_t>& mask, int h, int w) {
    require(mask.size() == std::size_t(h) * w, "mask: size mismatch");
    Image8 img;
    img.w = w;
    img.h = h;
    img.channels = 1;
    img.pixels = mask;
    return img;
}

}  // namespace poselab
