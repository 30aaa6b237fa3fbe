// Copyright 2026 The hamalign Authors. All Rights Reserved.
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

#pragma once

// Binary greyscale rasters (P5, maxval 255).

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "hamalign/error.hpp"

namespace hamalign::harness {

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

/// Min-max normalisation to [0, 255]. A constant map has zero range and
/// is emitted as all zeros.
inline GrayImage normalize_to_gray(const std::vector<double>& values, std::size_t width, std::size_t height) {
  if (values.size() != width * height || values.empty()) {
    throw DimensionError("pgm: " + std::to_string(values.size()) + " values for a " + std::to_string(width) + "x" +
                         std::to_string(height) + " raster");
  }
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  GrayImage img{width, height, std::vector<std::uint8_t>(values.size(), 0)};
  if (range > 0.0) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      img.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * (values[i] - *lo) / range));
    }
  }
  return img;
}

inline std::string encode_pgm(const GrayImage& img) {
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(img.pixels.begin(), img.pixels.end());
  return out;
}

inline void write_pgm(const std::string& path, const GrayImage& img) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("pgm: cannot open " + path + " for writing");
  const std::string bytes = encode_pgm(img);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("pgm: write failed for " + path);
}

/// Strict P5 reader: magic, width, height and maxval separated by
/// whitespace (comments allowed), a single whitespace byte, then exactly
/// width*height bytes.
inline GrayImage decode_pgm(const std::string& bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&](const char* what) {
    skip_space();
    const std::size_t start = pos;
    std::size_t value = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      value = value * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      if (value > (1u << 24)) throw FormatError(std::string("pgm: ") + what + " too large");
      ++pos;
    }
    if (pos == start) throw FormatError(std::string("pgm: missing ") + what);
    return value;
  };
  if (bytes.compare(0, 2, "P5") != 0) throw FormatError("pgm: bad magic");
  pos = 2;
  GrayImage img;
  img.width = number("width");
  img.height = number("height");
  const std::size_t maxval = number("maxval");
  if (img.width == 0 || img.height == 0) throw FormatError("pgm: empty raster");
  if (maxval != 255) throw FormatError("pgm: maxval " + std::to_string(maxval) + " is not 255");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw FormatError("pgm: missing separator before pixel data");
  }
  ++pos;
  if (bytes.size() - pos != img.width * img.height) {
    throw FormatError("pgm: expected " + std::to_string(img.width * img.height) + " pixel bytes, found " +
                      std::to_string(bytes.size() - pos));
  }
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return img;
}

inline GrayImage read_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("pgm: cannot open " + path);
  const std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_pgm(bytes);
}

}  // namespace hamalign::harness
