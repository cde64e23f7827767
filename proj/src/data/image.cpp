// SPDX-License-Identifier: Apache-2.0
#include "kid/data/image.hpp"

#include <cctype>
#include <cmath>
#include <string>

#include "kid/data/task.hpp"
#include "kid/util/io.hpp"

namespace kid::data {

Image blank_image(std::size_t height, std::size_t width) {
  return Image{height, width, std::vector<double>(height * width, 0.0)};
}

std::vector<double> patchify(const Image& image) {
  if (image.height != kImageSide || image.width != kImageSide) {
    throw SchemaError("patchify: expected a 32x32 image, got " + std::to_string(image.height) + "x" +
                      std::to_string(image.width));
  }
  std::vector<double> out;
  out.reserve(kPatchCount * kPatchDim);
  const std::size_t per_row = kImageSide / kPatchSide;
  for (std::size_t p = 0; p < kPatchCount; ++p) {
    const std::size_t r0 = (p / per_row) * kPatchSide;
    const std::size_t c0 = (p % per_row) * kPatchSide;
    for (std::size_t r = 0; r < kPatchSide; ++r) {
      for (std::size_t c = 0; c < kPatchSide; ++c) out.push_back(image.at(r0 + r, c0 + c));
    }
  }
  return out;
}

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string header_token(const std::string& s, std::size_t& pos) {
  while (pos < s.size()) {
    if (std::isspace(static_cast<unsigned char>(s[pos]))) {
      ++pos;
    } else if (s[pos] == '#') {
      while (pos < s.size() && s[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  const std::size_t start = pos;
  while (pos < s.size() && !std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  return s.substr(start, pos - start);
}

}  // namespace

Image read_pgm(const std::filesystem::path& path) {
  const std::string bytes = util::read_file(path);
  std::size_t pos = 0;
  if (header_token(bytes, pos) != "P5") throw SchemaError(path.string() + ": not a P5 PGM file");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(header_token(bytes, pos));
    h = std::stoul(header_token(bytes, pos));
    maxval = std::stoul(header_token(bytes, pos));
  } catch (const std::exception&) {
    throw SchemaError(path.string() + ": malformed PGM header");
  }
  if (w == 0 || h == 0 || maxval == 0 || maxval > 255) {
    throw SchemaError(path.string() + ": unsupported PGM dimensions or depth");
  }
  ++pos;  // single whitespace byte before the raster
  if (bytes.size() < pos + w * h) throw SchemaError(path.string() + ": truncated PGM raster");
  Image img{h, w, std::vector<double>(w * h)};
  for (std::size_t i = 0; i < w * h; ++i) {
    img.pixels[i] = static_cast<unsigned char>(bytes[pos + i]) / static_cast<double>(maxval);
  }
  return img;
}

std::string pgm_bytes(const Image& image) {
  std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  for (double v : image.pixels) {
    const double clamped = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(clamped * 255.0))));
  }
  return out;
}

void write_pgm(const std::filesystem::path& path, const Image& image) { util::atomic_write(path, pgm_bytes(image)); }

}  // namespace kid::data
