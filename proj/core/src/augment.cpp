#include "unseg/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <opencv2/imgproc.hpp>

#include "cv_bridge.hpp"
#include "unseg/error.hpp"

namespace unseg {

using detail::as_mat;
using detail::from_mat;

namespace {

constexpr std::array<std::string_view, 10> kNames = {
    "horizontal_flip", "random_rotate90",    "transpose",           "shift_scale_rotate",
    "blur",            "elastic",            "grid_distortion",     "optical_distortion",
    "hue_saturation_value", "clahe",
};

std::size_t index_of(Transform t) { return static_cast<std::size_t>(t); }

// Resamples image (bilinear) and mask (nearest) through the same map.
Sample remap_sample(const Sample& s, const cv::Mat& map_x, const cv::Mat& map_y) {
  Sample out;
  out.stem = s.stem;
  cv::Mat img, msk;
  cv::remap(as_mat(s.image), img, map_x, map_y, cv::INTER_LINEAR, cv::BORDER_REFLECT_101);
  cv::remap(as_mat(s.mask), msk, map_x, map_y, cv::INTER_NEAREST, cv::BORDER_REFLECT_101);
  out.image = from_mat(img);
  out.mask = from_mat(msk);
  return out;
}

void identity_maps(int h, int w, cv::Mat& map_x, cv::Mat& map_y) {
  map_x.create(h, w, CV_32FC1);
  map_y.create(h, w, CV_32FC1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      map_x.at<float>(y, x) = static_cast<float>(x);
      map_y.at<float>(y, x) = static_cast<float>(y);
    }
  }
}

// Piecewise-linear source coordinates along one axis of a distorted grid.
std::vector<float> grid_axis(int size, int steps, double limit, Rng& rng) {
  std::vector<float> coords(static_cast<std::size_t>(size));
  const int step = size / steps;
  if (step == 0) {
    for (int i = 0; i < size; ++i) coords[i] = static_cast<float>(i);
    return coords;
  }
  double prev = 0.0;
  for (int idx = 0; idx <= steps; ++idx) {
    const double scale = 1.0 + rng.uniform(-limit, limit);
    const int start = idx * step;
    const int end = idx == steps ? size : std::min(start + step, size);
    const double cur = prev + step * scale;
    const int n = end - start;
    for (int i = 0; i < n; ++i) {
      const double t = n == 1 ? 0.0 : static_cast<double>(i) / (n - 1);
      coords[start + i] = static_cast<float>(prev + (cur - prev) * t);
    }
    prev = cur;
  }
  return coords;
}

}  // namespace

void Sample::validate() const {
  if (image.empty() || image.channels != 3) {
    throw Error(ErrorCode::kInvalidArgument, "sample image must be 3-channel");
  }
  if (mask.height != image.height || mask.width != image.width) {
    throw Error(ErrorCode::kSizeMismatch, "image and mask dims differ for " + stem);
  }
  if (!is_binary_mask(mask)) throw Error(ErrorCode::kInvalidArgument, "mask is not binary for " + stem);
}

std::string_view transform_name(Transform t) { return kNames[index_of(t)]; }

std::optional<Transform> transform_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (kNames[i] == name) return kAllTransforms[i];
  }
  return std::nullopt;
}

double default_probability(Transform t) { return index_of(t) < 4 ? 0.25 : 0.1; }

bool moves_mask(Transform t) {
  switch (t) {
    case Transform::kBlur:
    case Transform::kHueSaturationValue:
    case Transform::kClahe:
      return false;
    default:
      return true;
  }
}

void AugmentParams::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::kInvalidArgument, what);
  };
  require(shift_limit >= 0 && scale_min > 0 && scale_min <= scale_max, "bad shift/scale range");
  require(rotate_limit_deg >= 0, "bad rotation limit");
  for (int k : blur_kernels) require(k >= 1 && k % 2 == 1, "blur kernels must be odd");
  require(elastic_alpha >= 0 && elastic_sigma > 0, "bad elastic parameters");
  require(grid_steps >= 1 && grid_distort_limit >= 0 && grid_distort_limit < 1, "bad grid parameters");
  require(optical_distort_limit >= 0 && optical_shift_limit >= 0, "bad optical parameters");
  require(hue_shift_deg >= 0 && sat_shift >= 0 && val_shift >= 0, "bad hsv parameters");
  require(clahe_clip_limit > 0 && clahe_tiles >= 1, "bad clahe parameters");
}

AugmentSpec::AugmentSpec() {
  for (auto t : kAllTransforms) probabilities[index_of(t)] = default_probability(t);
}

AugmentSpec AugmentSpec::none() { return AugmentSpec{}; }

AugmentSpec AugmentSpec::full() {
  AugmentSpec spec;
  spec.mode = AugmentMode::kFullPipeline;
  return spec;
}

AugmentSpec AugmentSpec::single_transform(Transform t, bool force) {
  AugmentSpec spec;
  spec.mode = AugmentMode::kSingle;
  spec.single = t;
  spec.force_p1 = force;
  return spec;
}

AugmentSpec AugmentSpec::parse(std::string_view text) {
  if (text == "none") return none();
  if (text == "full") return full();
  constexpr std::string_view prefix = "single:";
  if (text.starts_with(prefix)) {
    if (auto t = transform_from_name(text.substr(prefix.size()))) return single_transform(*t);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown augment spec '" + std::string(text) + "'");
}

std::string AugmentSpec::to_string() const {
  switch (mode) {
    case AugmentMode::kNone:
      return "none";
    case AugmentMode::kFullPipeline:
      return "full";
    case AugmentMode::kSingle:
      return "single:" + std::string(transform_name(single));
  }
  return "none";
}

void AugmentSpec::validate() const {
  for (double p : probabilities) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "probability outside [0,1]");
  }
  params.validate();
}

double AugmentSpec::probability(Transform t) const {
  switch (mode) {
    case AugmentMode::kNone:
      return 0.0;
    case AugmentMode::kFullPipeline:
      return probabilities[index_of(t)];
    case AugmentMode::kSingle:
      if (t != single) return 0.0;
      return force_p1 ? 1.0 : probabilities[index_of(t)];
  }
  return 0.0;
}

Sample apply_pipeline(const Sample& sample, const AugmentSpec& spec, Rng& rng, FiredSet* fired) {
  if (fired) fired->fill(false);
  sample.validate();
  if (spec.mode == AugmentMode::kNone) return sample;
  Sample cur = sample;
  for (auto t : kAllTransforms) {
    const double p = spec.probability(t);
    if (p <= 0.0) continue;
    if (!rng.bernoulli(p)) continue;
    if (fired) (*fired)[index_of(t)] = true;
    cur = apply_transform(t, cur, spec.params, rng);
  }
  return cur;
}

Sample apply_transform(Transform t, const Sample& s, const AugmentParams& p, Rng& rng) {
  switch (t) {
    case Transform::kHorizontalFlip:
      return transform_horizontal_flip(s);
    case Transform::kRandomRotate90:
      return transform_random_rotate90(s, rng);
    case Transform::kTranspose:
      return transform_transpose(s);
    case Transform::kShiftScaleRotate:
      return transform_shift_scale_rotate(s, p, rng);
    case Transform::kBlur:
      return transform_blur(s, p, rng);
    case Transform::kElastic:
      return transform_elastic(s, p, rng);
    case Transform::kGridDistortion:
      return transform_grid_distortion(s, p, rng);
    case Transform::kOpticalDistortion:
      return transform_optical_distortion(s, p, rng);
    case Transform::kHueSaturationValue:
      return transform_hue_saturation_value(s, p, rng);
    case Transform::kClahe:
      return transform_clahe(s, p);
  }
  return s;
}

namespace {

Image flip_columns(const Image& in) {
  Image out(in.height, in.width, in.channels);
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      for (int c = 0; c < in.channels; ++c) out.at(y, in.width - 1 - x, c) = in.at(y, x, c);
    }
  }
  return out;
}

Image transpose_image(const Image& in) {
  Image out(in.width, in.height, in.channels);
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      for (int c = 0; c < in.channels; ++c) out.at(x, y, c) = in.at(y, x, c);
    }
  }
  return out;
}

// One counter-clockwise quarter turn: out(y, x) = in(x, W-1-y).
Image rot90_ccw(const Image& in) {
  Image out(in.width, in.height, in.channels);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      for (int c = 0; c < in.channels; ++c) out.at(y, x, c) = in.at(x, in.width - 1 - y, c);
    }
  }
  return out;
}

}  // namespace

Sample transform_horizontal_flip(const Sample& s) {
  return Sample{flip_columns(s.image), flip_columns(s.mask), s.stem};
}

Sample rotate90(const Sample& s, int k) {
  k = ((k % 4) + 4) % 4;
  Sample out = s;
  for (int i = 0; i < k; ++i) {
    out.image = rot90_ccw(out.image);
    out.mask = rot90_ccw(out.mask);
  }
  return out;
}

Sample transform_random_rotate90(const Sample& s, Rng& rng) { return rotate90(s, rng.uniform_int(0, 3)); }

Sample transform_transpose(const Sample& s) {
  return Sample{transpose_image(s.image), transpose_image(s.mask), s.stem};
}

Sample transform_shift_scale_rotate(const Sample& s, const AugmentParams& p, Rng& rng) {
  const double angle = rng.uniform(-p.rotate_limit_deg, p.rotate_limit_deg);
  const double scale = rng.uniform(p.scale_min, p.scale_max);
  const double dx = rng.uniform(-p.shift_limit, p.shift_limit);
  const double dy = rng.uniform(-p.shift_limit, p.shift_limit);
  const int h = s.image.height, w = s.image.width;
  cv::Mat m = cv::getRotationMatrix2D(cv::Point2f(0.5f * (w - 1), 0.5f * (h - 1)), angle, scale);
  m.at<double>(0, 2) += dx * w;
  m.at<double>(1, 2) += dy * h;
  Sample out;
  out.stem = s.stem;
  cv::Mat img, msk;
  cv::warpAffine(as_mat(s.image), img, m, cv::Size(w, h), cv::INTER_LINEAR, cv::BORDER_REFLECT_101);
  cv::warpAffine(as_mat(s.mask), msk, m, cv::Size(w, h), cv::INTER_NEAREST, cv::BORDER_REFLECT_101);
  out.image = from_mat(img);
  out.mask = from_mat(msk);
  return out;
}

Sample transform_blur(const Sample& s, const AugmentParams& p, Rng& rng) {
  const int k = p.blur_kernels[rng.below(p.blur_kernels.size())];
  cv::Mat img;
  cv::blur(as_mat(s.image), img, cv::Size(k, k), cv::Point(-1, -1), cv::BORDER_REFLECT_101);
  return Sample{from_mat(img), s.mask, s.stem};
}

Sample transform_elastic(const Sample& s, const AugmentParams& p, Rng& rng) {
  const int h = s.image.height, w = s.image.width;
  cv::Mat dx(h, w, CV_32FC1), dy(h, w, CV_32FC1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) dx.at<float>(y, x) = static_cast<float>(rng.uniform(-1.0, 1.0));
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) dy.at<float>(y, x) = static_cast<float>(rng.uniform(-1.0, 1.0));
  }
  cv::GaussianBlur(dx, dx, cv::Size(0, 0), p.elastic_sigma, p.elastic_sigma, cv::BORDER_REFLECT_101);
  cv::GaussianBlur(dy, dy, cv::Size(0, 0), p.elastic_sigma, p.elastic_sigma, cv::BORDER_REFLECT_101);
  cv::Mat map_x, map_y;
  identity_maps(h, w, map_x, map_y);
  map_x += dx * p.elastic_alpha;
  map_y += dy * p.elastic_alpha;
  return remap_sample(s, map_x, map_y);
}

Sample transform_grid_distortion(const Sample& s, const AugmentParams& p, Rng& rng) {
  const int h = s.image.height, w = s.image.width;
  const auto xs = grid_axis(w, p.grid_steps, p.grid_distort_limit, rng);
  const auto ys = grid_axis(h, p.grid_steps, p.grid_distort_limit, rng);
  cv::Mat map_x(h, w, CV_32FC1), map_y(h, w, CV_32FC1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      map_x.at<float>(y, x) = xs[x];
      map_y.at<float>(y, x) = ys[y];
    }
  }
  return remap_sample(s, map_x, map_y);
}

Sample transform_optical_distortion(const Sample& s, const AugmentParams& p, Rng& rng) {
  const int h = s.image.height, w = s.image.width;
  const double k = rng.uniform(-p.optical_distort_limit, p.optical_distort_limit);
  const double sx = rng.uniform(-p.optical_shift_limit, p.optical_shift_limit);
  const double sy = rng.uniform(-p.optical_shift_limit, p.optical_shift_limit);
  const double cx = 0.5 * w + sx * w, cy = 0.5 * h + sy * h;
  const double fx = w, fy = h;
  cv::Mat map_x(h, w, CV_32FC1), map_y(h, w, CV_32FC1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double xn = (x - cx) / fx, yn = (y - cy) / fy;
      const double r2 = xn * xn + yn * yn;
      const double f = 1.0 + k * r2 + k * r2 * r2;
      map_x.at<float>(y, x) = static_cast<float>(xn * f * fx + cx);
      map_y.at<float>(y, x) = static_cast<float>(yn * f * fy + cy);
    }
  }
  return remap_sample(s, map_x, map_y);
}

Sample transform_hue_saturation_value(const Sample& s, const AugmentParams& p, Rng& rng) {
  // 8-bit HSV stores hue in half-degrees.
  const int dh = static_cast<int>(std::lround(rng.uniform(-p.hue_shift_deg, p.hue_shift_deg) / 2.0));
  const int ds = static_cast<int>(std::lround(rng.uniform(-p.sat_shift, p.sat_shift)));
  const int dv = static_cast<int>(std::lround(rng.uniform(-p.val_shift, p.val_shift)));
  cv::Mat hsv;
  cv::cvtColor(as_mat(s.image), hsv, cv::COLOR_RGB2HSV);
  for (int y = 0; y < hsv.rows; ++y) {
    auto* row = hsv.ptr<cv::Vec3b>(y);
    for (int x = 0; x < hsv.cols; ++x) {
      row[x][0] = static_cast<std::uint8_t>(((row[x][0] + dh) % 180 + 180) % 180);
      row[x][1] = static_cast<std::uint8_t>(std::clamp(row[x][1] + ds, 0, 255));
      row[x][2] = static_cast<std::uint8_t>(std::clamp(row[x][2] + dv, 0, 255));
    }
  }
  cv::Mat rgb;
  cv::cvtColor(hsv, rgb, cv::COLOR_HSV2RGB);
  return Sample{from_mat(rgb), s.mask, s.stem};
}

Sample transform_clahe(const Sample& s, const AugmentParams& p) {
  cv::Mat lab;
  cv::cvtColor(as_mat(s.image), lab, cv::COLOR_RGB2Lab);
  std::vector<cv::Mat> planes;
  cv::split(lab, planes);
  auto clahe = cv::createCLAHE(p.clahe_clip_limit, cv::Size(p.clahe_tiles, p.clahe_tiles));
  cv::Mat l;
  clahe->apply(planes[0], l);
  planes[0] = l;
  cv::merge(planes, lab);
  cv::Mat rgb;
  cv::cvtColor(lab, rgb, cv::COLOR_Lab2RGB);
  return Sample{from_mat(rgb), s.mask, s.stem};
}

}  // namespace unseg
