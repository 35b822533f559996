#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace mrinet {

struct ImageDims {
  std::size_t width = 0;
  std::size_t height = 0;
  bool operator==(const ImageDims&) const = default;
};

// 8-bit grayscale raster, row-major, top-left origin.
struct Image {
  ImageDims dims;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(ImageDims d, std::uint8_t fill = 0) : dims(d), pixels(d.width * d.height, fill) {}

  std::size_t width() const { return dims.width; }
  std::size_t height() const { return dims.height; }
  std::uint8_t& at(std::size_t x, std::size_t y) { return pixels[y * dims.width + x]; }
  std::uint8_t at(std::size_t x, std::size_t y) const { return pixels[y * dims.width + x]; }

  bool operator==(const Image&) const = default;
};

// Binary PGM (P5), maxval 255. Header comments are skipped on read and never written.
Image read_pgm(const std::filesystem::path& path);
void write_pgm(const Image& image, const std::filesystem::path& path);

}  // namespace mrinet
