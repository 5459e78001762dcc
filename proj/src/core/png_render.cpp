/*
 *  Copyright 2026 The VSMO Authors
 *
 *  Licensed under the Apache License, Version 2.0 (the "License");
 *  you may not use this file except in compliance with the License.
 *  You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 *  Unless required by applicable law or agreed to in writing, software
 *  distributed under the License is distributed on an "AS IS" BASIS,
 *  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 *  See the License for the specific language governing permissions and
 *  limitations under the License.
 */

#include "core/png_render.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace vsmo {

std::vector<std::uint8_t> apply_window(const Image& image, double low, double high) {
  require(high > low, ErrorCode::invalid_parameter, "display window must have high > low");
  std::vector<std::uint8_t> out;
  out.reserve(image.size());
  for (double v : image.data())
    out.push_back(static_cast<std::uint8_t>(std::lround(255.0 * std::clamp((v - low) / (high - low), 0.0, 1.0))));
  return out;
}

namespace {

void append_bytes(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), length);
}

void flush_nothing(png_structp) {}

struct ReadCursor {
  const std::string* bytes;
  std::size_t pos;
};

void read_bytes(png_structp png, png_bytep data, png_size_t length) {
  auto* c = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (c->pos + length > c->bytes->size()) png_error(png, "truncated PNG");
  std::memcpy(data, c->bytes->data() + c->pos, length);
  c->pos += length;
}

}  // namespace

std::string encode_png_gray8(int width, int height, const std::vector<std::uint8_t>& pixels) {
  require(width > 0 && height > 0 && pixels.size() == static_cast<std::size_t>(width) * static_cast<std::size_t>(height),
          ErrorCode::invalid_input, "PNG size does not match its pixels");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, ErrorCode::io, "cannot create PNG writer");
  png_infop info = png_create_info_struct(png);
  std::string out;
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, info ? &info : nullptr);
    fail(ErrorCode::io, "PNG encoding failed");
  }
  png_set_write_fn(png, &out, append_bytes, flush_nothing);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y)
    png_write_row(png, const_cast<png_bytep>(pixels.data() + static_cast<std::size_t>(y) * static_cast<std::size_t>(width)));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

DecodedPng decode_png_gray8(const std::string& bytes) {
  require(bytes.size() >= 8 && png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) == 0,
          ErrorCode::parse, "not a PNG");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, ErrorCode::io, "cannot create PNG reader");
  png_infop info = png_create_info_struct(png);
  ReadCursor cursor{&bytes, 0};
  DecodedPng out;
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    fail(ErrorCode::parse, "PNG decoding failed");
  }
  png_set_read_fn(png, &cursor, read_bytes);
  png_read_info(png, info);
  require(png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) == 8, ErrorCode::parse,
          "expected an 8-bit greyscale PNG");
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.pixels.resize(static_cast<std::size_t>(out.width) * static_cast<std::size_t>(out.height));
  for (int y = 0; y < out.height; ++y)
    png_read_row(png, out.pixels.data() + static_cast<std::size_t>(y) * static_cast<std::size_t>(out.width), nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

}  // namespace vsmo
