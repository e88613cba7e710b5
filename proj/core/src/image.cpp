#include "unseg/image.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "cv_bridge.hpp"
#include "unseg/error.hpp"

namespace unseg {

using detail::as_mat;
using detail::from_mat;

Image read_image(const std::filesystem::path& path, ColorMode mode) {
  if (!std::filesystem::is_regular_file(path)) {
    throw Error(ErrorCode::kMissingFile, path.string());
  }
  cv::Mat mat = cv::imread(path.string(), mode == ColorMode::kRgb ? cv::IMREAD_COLOR : cv::IMREAD_GRAYSCALE);
  if (mat.empty()) throw Error(ErrorCode::kDecodeError, path.string());
  if (mode == ColorMode::kRgb) cv::cvtColor(mat, mat, cv::COLOR_BGR2RGB);
  return from_mat(mat);
}

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.empty() || (image.channels != 1 && image.channels != 3)) {
    throw Error(ErrorCode::kInvalidArgument, "write_png needs a 1- or 3-channel image");
  }
  cv::Mat mat = as_mat(image);
  cv::Mat bgr;
  if (image.channels == 3) {
    cv::cvtColor(mat, bgr, cv::COLOR_RGB2BGR);
  } else {
    bgr = mat;
  }
  const std::vector<int> params{cv::IMWRITE_PNG_COMPRESSION, 6};
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), bgr, params);
  } catch (const cv::Exception& e) {
    throw Error(ErrorCode::kIoError, path.string() + ": " + e.what());
  }
  if (!ok) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
}

void write_mask_png(const std::filesystem::path& path, const Image& mask) {
  Image scaled = mask;
  for (auto& v : scaled.pixels) v = v ? 255 : 0;
  write_png(path, scaled);
}

Image resize_bilinear(const Image& image, int height, int width) {
  if (image.height == height && image.width == width) return image;
  cv::Mat out;
  cv::resize(as_mat(image), out, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);
  return from_mat(out);
}

Image resize_nearest(const Image& image, int height, int width) {
  if (image.height == height && image.width == width) return image;
  // Explicit half-pixel nearest sampling; cv::INTER_NEAREST rounds differently.
  Image out(height, width, image.channels);
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(image.height - 1, static_cast<int>((y + 0.5) * image.height / height));
    for (int x = 0; x < width; ++x) {
      const int sx = std::min(image.width - 1, static_cast<int>((x + 0.5) * image.width / width));
      for (int c = 0; c < image.channels; ++c) out.at(y, x, c) = image.at(sy, sx, c);
    }
  }
  return out;
}

Image binarize(const Image& gray, std::uint8_t threshold) {
  Image out = gray;
  for (auto& v : out.pixels) v = v >= threshold ? 1 : 0;
  return out;
}

bool is_binary_mask(const Image& mask) {
  if (mask.channels != 1) return false;
  for (auto v : mask.pixels) {
    if (v > 1) return false;
  }
  return true;
}

}  // namespace unseg
