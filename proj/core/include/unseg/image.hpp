#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace unseg {

// 8-bit interleaved image (HWC). Masks are single-channel with values {0,1}.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int h, int w, int c, std::uint8_t fill = 0)
      : height(h), width(w), channels(c), pixels(static_cast<std::size_t>(h) * w * c, fill) {}

  bool empty() const noexcept { return pixels.empty(); }
  std::size_t index(int y, int x, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  std::uint8_t& at(int y, int x, int c = 0) { return pixels[index(y, x, c)]; }
  std::uint8_t at(int y, int x, int c = 0) const { return pixels[index(y, x, c)]; }

  friend bool operator==(const Image&, const Image&) = default;
};

enum class ColorMode { kRgb, kGray };

// Decodes any format OpenCV understands; RGB channel order.
// Throws kMissingFile / kDecodeError.
Image read_image(const std::filesystem::path& path, ColorMode mode);
// Lossless PNG with fixed compression settings. Throws kIoError.
void write_png(const std::filesystem::path& path, const Image& image);
// Masks with values {0,1} are written as {0,255}.
void write_mask_png(const std::filesystem::path& path, const Image& mask);

Image resize_bilinear(const Image& image, int height, int width);
Image resize_nearest(const Image& image, int height, int width);

// Maps gray levels to {0,1} with an inclusive threshold (>= 128 by default).
Image binarize(const Image& gray, std::uint8_t threshold = 128);
bool is_binary_mask(const Image& mask);

}  // namespace unseg
