#pragma once

#include "fieldslam/types.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace fieldslam {

// Binary PNM image payloads: P6 (8-bit RGB) for color, P5 with maxval 65535
// (16-bit, big-endian samples) for depth. These carry the TUM-layout image
// data without an external codec dependency.

void write_ppm(const std::filesystem::path& path, int width, int height, const uint8_t* rgb);

struct PpmImage {
  int width = 0, height = 0;
  std::vector<uint8_t> rgb;  // 3 * width * height
};
PpmImage read_ppm(const std::filesystem::path& path);

void write_pgm16(const std::filesystem::path& path, int width, int height, const uint16_t* gray);

struct Pgm16Image {
  int width = 0, height = 0;
  std::vector<uint16_t> gray;
};
Pgm16Image read_pgm16(const std::filesystem::path& path);

}  // namespace fieldslam
