/* Copyright 2026 The DFR Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "dfr/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

#ifdef DFR_HAVE_JPEG
#include <csetjmp>
#include <jpeglib.h>
#endif

#include "dfr/error.hpp"

namespace dfr {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open '" + path + "': " + std::strerror(errno));
  return f;
}

void png_error_fn(png_structp png, png_const_charp msg) {
  auto* out = static_cast<std::string*>(png_get_error_ptr(png));
  if (out) *out = msg;
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

Tensor3 decode_png(const std::string& path) {
  FilePtr f = open_file(path, "rb");
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  if (!png) throw FormatError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint8_t> raw;
  std::vector<png_bytep> rows;
  png_uint_32 w = 0, h = 0;
  int channels = 0;
  int depth = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("PNG decode of '" + path + "' failed: " + err);
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  w = png_get_image_width(png, info);
  h = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (depth == 16) png_set_swap(png);  // little-endian host order
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  channels = png_get_channels(png, info);
  depth = png_get_bit_depth(png, info);
  const std::size_t row_bytes = png_get_rowbytes(png, info);
  raw.resize(row_bytes * h);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = raw.data() + y * row_bytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  if (channels != 1 && channels != 3) throw FormatError("unsupported PNG channel layout in '" + path + "'");
  Tensor3 out(static_cast<int>(h), static_cast<int>(w), channels);
  auto dst = out.data();
  const std::size_t n = dst.size();
  if (depth == 16) {
    for (std::size_t i = 0; i < n; ++i) {
      std::uint16_t v;
      std::memcpy(&v, raw.data() + 2 * i, 2);
      dst[i] = static_cast<float>(v) / 65535.0f;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) dst[i] = static_cast<float>(raw[i]) / 255.0f;
  }
  return out;
}

#ifdef DFR_HAVE_JPEG
struct JpegErr {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char msg[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* e = reinterpret_cast<JpegErr*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, e->msg);
  std::longjmp(e->jump, 1);
}

Tensor3 decode_jpeg(const std::string& path) {
  FilePtr f = open_file(path, "rb");
  jpeg_decompress_struct cinfo;
  JpegErr jerr;
  cinfo.err = jpeg_std_error(&jerr.mgr);
  jerr.mgr.error_exit = jpeg_error_exit;
  std::vector<std::uint8_t> raw;
  if (setjmp(jerr.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw FormatError("JPEG decode of '" + path + "' failed: " + jerr.msg);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f.get());
  jpeg_read_header(&cinfo, TRUE);
  if (cinfo.jpeg_color_space != JCS_GRAYSCALE) cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  const int w = static_cast<int>(cinfo.output_width);
  const int h = static_cast<int>(cinfo.output_height);
  const int c = cinfo.output_components;
  raw.resize(static_cast<std::size_t>(w) * h * c);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = raw.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * c;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  Tensor3 out(h, w, c);
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<float>(raw[i]) / 255.0f;
  return out;
}
#endif

bool has_png_signature(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::uint8_t sig[8] = {};
  in.read(reinterpret_cast<char*>(sig), 8);
  return in.gcount() == 8 && png_sig_cmp(sig, 0, 8) == 0;
}

bool has_jpeg_signature(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::uint8_t sig[3] = {};
  in.read(reinterpret_cast<char*>(sig), 3);
  return in.gcount() == 3 && sig[0] == 0xFF && sig[1] == 0xD8 && sig[2] == 0xFF;
}

Tensor3 triplicate(const Tensor3& gray) {
  Tensor3 out(gray.height(), gray.width(), 3);
  for (int i = 0; i < gray.height(); ++i)
    for (int j = 0; j < gray.width(); ++j) {
      const float v = gray.at(i, j, 0);
      auto dst = out.cell(i, j);
      dst[0] = dst[1] = dst[2] = v;
    }
  return out;
}

void write_png(const std::string& path, int width, int height, int color_type, int depth,
               const std::vector<std::uint8_t>& packed, std::size_t row_bytes) {
  FilePtr f = open_file(path, "wb");
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  if (!png) throw IoError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = const_cast<png_bytep>(packed.data() + y * row_bytes);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encode of '" + path + "' failed: " + err);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, width, height, depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::uint8_t quantize8(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

void require_channels(const Tensor3& t, int c, const char* what) {
  if (t.channels() != c) throw ShapeError(std::string(what) + ": expected " + std::to_string(c) + " channel(s)");
}

}  // namespace

Tensor3 decode_image(const std::string& path) {
  if (has_png_signature(path)) return decode_png(path);
  if (has_jpeg_signature(path)) {
#ifdef DFR_HAVE_JPEG
    return decode_jpeg(path);
#else
    throw FormatError("'" + path + "' is JPEG but this build has no JPEG support");
#endif
  }
  throw FormatError("'" + path + "' is not a supported raster format (PNG or JPEG)");
}

ImageRecord load_image(const std::string& path, int target_side) {
  Tensor3 raw = decode_image(path);
  if (raw.channels() == 1) raw = triplicate(raw);
  ImageRecord rec;
  rec.path = path;
  if (raw.height() == target_side && raw.width() == target_side) {
    rec.pixels = std::move(raw);
  } else {
    rec.pixels = resize_bilinear(raw, target_side, target_side);
  }
  return rec;
}

Tensor3 load_mask(const std::string& path, int target_side) {
  Tensor3 raw = decode_image(path);
  Tensor3 gray(raw.height(), raw.width(), 1);
  for (int i = 0; i < raw.height(); ++i)
    for (int j = 0; j < raw.width(); ++j) gray.at(i, j, 0) = raw.at(i, j, 0);
  Tensor3 out = resize_nearest(gray, target_side, target_side);
  for (float& v : out.data()) v = v > 0.5f ? 1.0f : 0.0f;
  return out;
}

void write_png_rgb8(const std::string& path, const Tensor3& image) {
  require_channels(image, 3, "write_png_rgb8");
  std::vector<std::uint8_t> packed(image.size());
  auto src = image.data();
  for (std::size_t i = 0; i < packed.size(); ++i) packed[i] = quantize8(src[i]);
  write_png(path, image.width(), image.height(), PNG_COLOR_TYPE_RGB, 8, packed,
            static_cast<std::size_t>(image.width()) * 3);
}

void write_png_gray8(const std::string& path, const Tensor3& image) {
  require_channels(image, 1, "write_png_gray8");
  std::vector<std::uint8_t> packed(image.size());
  auto src = image.data();
  for (std::size_t i = 0; i < packed.size(); ++i) packed[i] = quantize8(src[i]);
  write_png(path, image.width(), image.height(), PNG_COLOR_TYPE_GRAY, 8, packed,
            static_cast<std::size_t>(image.width()));
}

void write_png_gray16(const std::string& path, const Tensor3& image) {
  require_channels(image, 1, "write_png_gray16");
  std::vector<std::uint8_t> packed(image.size() * 2);
  auto src = image.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const auto v = static_cast<std::uint16_t>(std::lround(std::clamp(src[i], 0.0f, 1.0f) * 65535.0f));
    packed[2 * i] = static_cast<std::uint8_t>(v >> 8);  // PNG is big-endian
    packed[2 * i + 1] = static_cast<std::uint8_t>(v & 0xFF);
  }
  write_png(path, image.width(), image.height(), PNG_COLOR_TYPE_GRAY, 16, packed,
            static_cast<std::size_t>(image.width()) * 2);
}

void write_png_mask(const std::string& path, const Tensor3& mask) {
  require_channels(mask, 1, "write_png_mask");
  const std::size_t row_bytes = (static_cast<std::size_t>(mask.width()) + 7) / 8;
  std::vector<std::uint8_t> packed(row_bytes * mask.height(), 0);
  for (int i = 0; i < mask.height(); ++i)
    for (int j = 0; j < mask.width(); ++j)
      if (mask.at(i, j, 0) > 0.5f) packed[i * row_bytes + j / 8] |= static_cast<std::uint8_t>(0x80u >> (j % 8));
  write_png(path, mask.width(), mask.height(), PNG_COLOR_TYPE_GRAY, 1, packed, row_bytes);
}

}  // namespace dfr
