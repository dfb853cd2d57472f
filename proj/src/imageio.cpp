// SPDX-License-Identifier: Apache-2.0
#include "volgen/imageio.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace volgen {

namespace {

struct FileCloser {
  FILE* f = nullptr;
  ~FileCloser() {
    if (f) std::fclose(f);
  }
};

uint8_t to_u8(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<uint8_t>(std::lround(c * 255.0f));
}

}  // namespace

void write_png8(const std::string& path, const ImageF& img) {
  check(img.channels == 1 || img.channels == 3, "write_png8: need 1 or 3 channels");
  FileCloser fc{std::fopen(path.c_str(), "wb")};
  check(fc.f != nullptr, "write_png8: cannot open " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  check(png && info, "write_png8: libpng init failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("write_png8: libpng error for " + path);
  }
  png_init_io(png, fc.f);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<uint8_t> row(static_cast<size_t>(img.width) * img.channels);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        row[static_cast<size_t>(x) * img.channels + c] = to_u8(img.at(x, y, c));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_png16(const std::string& path, const ImageF& img, double scale) {
  check(img.channels == 1, "write_png16: grayscale only");
  FileCloser fc{std::fopen(path.c_str(), "wb")};
  check(fc.f != nullptr, "write_png16: cannot open " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  check(png && info, "write_png16: libpng init failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("write_png16: libpng error for " + path);
  }
  png_init_io(png, fc.f);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 16, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<uint8_t> row(static_cast<size_t>(img.width) * 2);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double v = std::clamp(static_cast<double>(img.at(x, y, 0)) * scale, 0.0, 65535.0);
      const uint16_t u = static_cast<uint16_t>(std::lround(v));
      row[2 * x] = static_cast<uint8_t>(u >> 8);  // PNG is big-endian
      row[2 * x + 1] = static_cast<uint8_t>(u & 0xff);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ImageF read_png(const std::string& path) {
  FileCloser fc{std::fopen(path.c_str(), "rb")};
  check(fc.f != nullptr, "read_png: cannot open " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  check(png && info, "read_png: libpng init failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("read_png: libpng error for " + path);
  }
  png_init_io(png, fc.f);
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);

  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_read_update_info(png, info);

  const int channels = png_get_channels(png, info);
  const int depth = png_get_bit_depth(png, info);
  const size_t row_bytes = png_get_rowbytes(png, info);
  std::vector<uint8_t> data(row_bytes * h);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = data.data() + y * row_bytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  ImageF img = ImageF::zeros(static_cast<int>(w), static_cast<int>(h), channels);
  if (depth == 8) {
    for (size_t i = 0; i < img.px.size(); ++i) img.px[i] = data[i] / 255.0f;
  } else if (depth == 16) {
    for (size_t i = 0; i < img.px.size(); ++i) {
      const uint16_t v = static_cast<uint16_t>((data[2 * i] << 8) | data[2 * i + 1]);
      img.px[i] = v / 65535.0f;
    }
  } else {
    throw std::runtime_error("read_png: unsupported bit depth");
  }
  return img;
}

ImageF tensor_to_image(const Tensor& t) {
  check(t.ndim() == 2 || t.ndim() == 3, "tensor_to_image: need [H,W] or [H,W,C]");
  const int h = static_cast<int>(t.dim(0));
  const int w = static_cast<int>(t.dim(1));
  const int c = t.ndim() == 3 ? static_cast<int>(t.dim(2)) : 1;
  ImageF img = ImageF::zeros(w, h, c);
  for (int64_t i = 0; i < t.numel(); ++i) img.px[static_cast<size_t>(i)] = t[i];
  return img;
}

Tensor image_to_tensor(const ImageF& img) {
  Tensor t({img.height, img.width, img.channels});
  for (size_t i = 0; i < img.px.size(); ++i) t[static_cast<int64_t>(i)] = img.px[i];
  return t;
}

}  // namespace volgen
