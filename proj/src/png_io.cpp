#include "unigs/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include "unigs/common.hpp"

namespace unigs {
namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

unsigned char quantize(double v) {
  if (!(v > 0.0)) return 0;  // also catches NaN
  if (v >= 1.0) return 255;
  return static_cast<unsigned char>(std::lround(v * 255.0));
}

[[noreturn]] void fail(const std::string& what, const std::string& path) {
  throw ContractError("png: " + what + ": " + path);
}

}  // namespace

void save_png(const std::string& path, const Tensor& rgb,
              const Tensor& alpha) {
  if (rgb.ndim() != 3 || rgb.dim(0) != 3)
    throw ContractError("save_png: image must be [3,H,W]");
  const long h = rgb.dim(1), w = rgb.dim(2);
  if (h < 1 || w < 1) throw ContractError("save_png: empty image");
  const bool with_alpha = alpha.defined();
  if (with_alpha && (alpha.ndim() != 3 || alpha.dim(0) != 1 ||
                     alpha.dim(1) != h || alpha.dim(2) != w))
    throw ContractError("save_png: alpha must be [1,H,W] matching the image");

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) fail("cannot open for write", path);

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail("write struct alloc failed", path);
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail("info struct alloc failed", path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail("encode error", path);
  }

  png_init_io(png, fp.get());
  const int channels = with_alpha ? 4 : 3;
  png_set_IHDR(png, info, static_cast<png_uint_32>(w),
               static_cast<png_uint_32>(h), 8,
               with_alpha ? PNG_COLOR_TYPE_RGBA : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  const std::vector<double>& v = rgb.data();
  std::vector<unsigned char> row(static_cast<size_t>(w) * channels);
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      for (long c = 0; c < 3; ++c)
        row[static_cast<size_t>(x) * channels + c] =
            quantize(v[static_cast<size_t>((c * h + y) * w + x)]);
      if (with_alpha)
        row[static_cast<size_t>(x) * channels + 3] =
            quantize(alpha.data()[static_cast<size_t>(y * w + x)]);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

PngImage load_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) fail("cannot open", path);

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail("read struct alloc failed", path);
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail("info struct alloc failed", path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail("decode error", path);
  }

  png_init_io(png, fp.get());
  png_read_info(png, info);

  // Normalize every color type to 8-bit RGB or RGBA.
  png_set_expand(png);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  const long w = static_cast<long>(png_get_image_width(png, info));
  const long h = static_cast<long>(png_get_image_height(png, info));
  const int channels = static_cast<int>(png_get_channels(png, info));
  if (channels != 3 && channels != 4) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail("unsupported channel layout after expansion", path);
  }

  std::vector<unsigned char> pixels(static_cast<size_t>(h) * w * channels);
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (long y = 0; y < h; ++y)
    rows[static_cast<size_t>(y)] =
        pixels.data() + static_cast<size_t>(y) * w * channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  PngImage out;
  out.rgb = Tensor::zeros({3, h, w});
  std::vector<double>& rv = out.rgb.data();
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x)
      for (long c = 0; c < 3; ++c)
        rv[static_cast<size_t>((c * h + y) * w + x)] =
            pixels[static_cast<size_t>((y * w + x) * channels + c)] / 255.0;
  if (channels == 4) {
    out.alpha = Tensor::zeros({1, h, w});
    std::vector<double>& av = out.alpha.data();
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x)
        av[static_cast<size_t>(y * w + x)] =
            pixels[static_cast<size_t>((y * w + x) * channels + 3)] / 255.0;
  }
  return out;
}

std::pair<long, long> png_size(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) fail("cannot open", path);
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail("read struct alloc failed", path);
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail("info struct alloc failed", path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail("header error", path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  auto size = std::make_pair(static_cast<long>(png_get_image_width(png, info)),
                             static_cast<long>(png_get_image_height(png, info)));
  png_destroy_read_struct(&png, &info, nullptr);
  return size;
}

}  // namespace unigs
