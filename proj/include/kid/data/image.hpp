// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace kid::data {

inline constexpr std::size_t kImageSide = 32;
inline constexpr std::size_t kPatchSide = 8;
inline constexpr std::size_t kPatchCount = (kImageSide / kPatchSide) * (kImageSide / kPatchSide);
inline constexpr std::size_t kPatchDim = kPatchSide * kPatchSide;

// Grayscale, row-major, values in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  double at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
  bool operator==(const Image&) const = default;
};

Image blank_image(std::size_t height = kImageSide, std::size_t width = kImageSide);

// kPatchCount patches in row-major patch order, each kPatchDim values
// flattened row-major; returned as one flat array.
std::vector<double> patchify(const Image& image);

Image read_pgm(const std::filesystem::path& path);
// 8-bit P5; values are rounded to the nearest 1/255.
void write_pgm(const std::filesystem::path& path, const Image& image);
std::string pgm_bytes(const Image& image);

}  // namespace kid::data
