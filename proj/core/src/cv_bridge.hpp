#pragma once

#include <opencv2/core.hpp>

#include "unseg/image.hpp"

namespace unseg::detail {

inline int cv_type(int channels) { return CV_8UC(channels); }

// Non-owning view; the Image must outlive the Mat.
inline cv::Mat as_mat(Image& image) {
  return cv::Mat(image.height, image.width, cv_type(image.channels), image.pixels.data());
}

inline cv::Mat as_mat(const Image& image) {
  return cv::Mat(image.height, image.width, cv_type(image.channels), const_cast<std::uint8_t*>(image.pixels.data()));
}

inline Image from_mat(const cv::Mat& mat) {
  cv::Mat src = mat.isContinuous() ? mat : mat.clone();
  Image out(src.rows, src.cols, src.channels());
  std::copy(src.data, src.data + out.pixels.size(), out.pixels.begin());
  return out;
}

}  // namespace unseg::detail
