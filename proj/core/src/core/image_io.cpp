// Copyright 2026 The codefend Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "codefend/core/image_io.hpp"

#include <png.h>

#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include <fmt/format.h>

#include "codefend/core/error.hpp"

namespace codefend {

namespace fs = std::filesystem;

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) {
    const bool reading = mode[0] == 'r';
    throw Error(reading && !fs::exists(path) ? ErrorCode::kMissingFile : ErrorCode::kIoError,
                fmt::format("cannot open '{}'", path.string()));
  }
  return f;
}

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
  return v;
}

}  // namespace

void write_png(const ImageTensor& image, const fs::path& path) {
  FilePtr file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png != nullptr ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::kIoError, "libpng initialisation failed");
  }
  std::vector<png_byte> rows(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) {
    rows[i] = static_cast<png_byte>(std::lround(image.data()[i] * 255.0f));
  }
  std::vector<png_bytep> row_ptrs(image.height());
  const std::size_t stride = static_cast<std::size_t>(image.width()) * image.channels();
  for (int y = 0; y < image.height(); ++y) row_ptrs[y] = rows.data() + y * stride;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::kIoError, fmt::format("failed writing '{}'", path.string()));
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, image.width(), image.height(), 8,
               image.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, row_ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ImageTensor read_png(const fs::path& path, std::string id) {
  FilePtr file = open_file(path, "rb");
  std::array<png_byte, 8> sig{};
  if (std::fread(sig.data(), 1, sig.size(), file.get()) != sig.size() ||
      png_sig_cmp(sig.data(), 0, sig.size()) != 0) {
    throw Error(ErrorCode::kIoError, fmt::format("'{}' is not a PNG file", path.string()));
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png != nullptr ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::kIoError, "libpng initialisation failed");
  }
  std::vector<png_byte> pixels;
  std::vector<png_bytep> row_ptrs;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::kIoError, fmt::format("corrupt PNG '{}'", path.string()));
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, static_cast<int>(sig.size()));
  png_read_info(png, info);

  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_packing(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  pixels.resize(static_cast<std::size_t>(width) * height * channels);
  row_ptrs.resize(height);
  for (int y = 0; y < height; ++y) {
    row_ptrs[y] = pixels.data() + static_cast<std::size_t>(y) * width * channels;
  }
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  std::vector<float> data(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) data[i] = pixels[i] / 255.0f;
  return ImageTensor(height, width, channels, std::move(data), std::move(id));
}

void write_npybin(const ImageTensor& image, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, fmt::format("cannot open '{}'", path.string()));
  const std::array<std::uint32_t, 3> dims = {to_le(static_cast<std::uint32_t>(image.height())),
                                             to_le(static_cast<std::uint32_t>(image.width())),
                                             to_le(static_cast<std::uint32_t>(image.channels()))};
  out.write(reinterpret_cast<const char*>(dims.data()), sizeof(dims));
  for (float v : image.data()) {
    const std::uint32_t bits = to_le(std::bit_cast<std::uint32_t>(v));
    out.write(reinterpret_cast<const char*>(&bits), sizeof(bits));
  }
  if (!out) throw Error(ErrorCode::kIoError, fmt::format("failed writing '{}'", path.string()));
}

ImageTensor read_npybin(const fs::path& path, std::string id) {
  if (!fs::exists(path)) {
    throw Error(ErrorCode::kMissingFile, fmt::format("'{}' does not exist", path.string()));
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, fmt::format("cannot open '{}'", path.string()));
  std::array<std::uint32_t, 3> dims{};
  in.read(reinterpret_cast<char*>(dims.data()), sizeof(dims));
  if (!in) throw Error(ErrorCode::kIoError, fmt::format("truncated header in '{}'", path.string()));
  for (auto& d : dims) d = to_le(d);
  const std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  if (n == 0 || n > (std::size_t{1} << 30)) {
    throw Error(ErrorCode::kIoError, fmt::format("bad dims in '{}'", path.string()));
  }
  std::vector<float> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits = 0;
    in.read(reinterpret_cast<char*>(&bits), sizeof(bits));
    data[i] = std::bit_cast<float>(to_le(bits));
  }
  if (!in) throw Error(ErrorCode::kIoError, fmt::format("truncated payload in '{}'", path.string()));
  return ImageTensor(static_cast<int>(dims[0]), static_cast<int>(dims[1]),
                     static_cast<int>(dims[2]), std::move(data), std::move(id));
}

ImageTensor read_image(const fs::path& path) {
  const std::string stem = path.stem().string();
  if (path.extension() == ".npybin") return read_npybin(path, stem);
  return read_png(path, stem);
}

void write_image(const ImageTensor& image, const fs::path& path) {
  if (path.extension() == ".npybin") {
    write_npybin(image, path);
  } else {
    write_png(image, path);
  }
}

}  // namespace codefend
