#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "unseg/image.hpp"
#include "unseg/rng.hpp"

namespace unseg {

// Image (H x W x 3) with its binary crack mask (H x W x 1, values {0,1}).
struct Sample {
  Image image;
  Image mask;
  std::string stem;

  void validate() const;
  friend bool operator==(const Sample&, const Sample&) = default;
};

// Listed in pipeline order.
enum class Transform {
  kHorizontalFlip,
  kRandomRotate90,
  kTranspose,
  kShiftScaleRotate,
  kBlur,
  kElastic,
  kGridDistortion,
  kOpticalDistortion,
  kHueSaturationValue,
  kClahe,
};

inline constexpr std::array<Transform, 10> kAllTransforms = {
    Transform::kHorizontalFlip, Transform::kRandomRotate90,  Transform::kTranspose,
    Transform::kShiftScaleRotate, Transform::kBlur,           Transform::kElastic,
    Transform::kGridDistortion, Transform::kOpticalDistortion, Transform::kHueSaturationValue,
    Transform::kClahe,
};

// Command-line names: horizontal_flip, random_rotate90, transpose,
// shift_scale_rotate, blur, elastic, grid_distortion, optical_distortion,
// hue_saturation_value, clahe.
std::string_view transform_name(Transform t);
std::optional<Transform> transform_from_name(std::string_view name);
// 0.25 for geometric transforms, 0.1 for distortions and photometric ones.
double default_probability(Transform t);
// False for transforms that must leave the mask byte-identical.
bool moves_mask(Transform t);

struct AugmentParams {
  double shift_limit = 0.0625;  // fraction of the side
  double scale_min = 0.9;
  double scale_max = 1.1;
  double rotate_limit_deg = 45.0;
  std::array<int, 3> blur_kernels{3, 5, 7};
  double elastic_alpha = 30.0;  // px
  double elastic_sigma = 5.0;   // px
  int grid_steps = 5;
  double grid_distort_limit = 0.3;
  double optical_distort_limit = 0.05;
  double optical_shift_limit = 0.05;
  double hue_shift_deg = 10.0;
  double sat_shift = 15.0;
  double val_shift = 10.0;
  double clahe_clip_limit = 4.0;
  int clahe_tiles = 8;

  void validate() const;
};

enum class AugmentMode { kNone, kFullPipeline, kSingle };

struct AugmentSpec {
  AugmentMode mode = AugmentMode::kNone;
  Transform single = Transform::kHorizontalFlip;
  // Per transform, indexed like kAllTransforms.
  std::array<double, 10> probabilities{};
  AugmentParams params;
  // In single mode: fire on every sample instead of at the branch probability.
  bool force_p1 = false;

  AugmentSpec();
  static AugmentSpec none();
  static AugmentSpec full();
  static AugmentSpec single_transform(Transform t, bool force_p1 = false);
  // "none", "full" or "single:<name>"; throws kInvalidArgument.
  static AugmentSpec parse(std::string_view text);
  std::string to_string() const;
  void validate() const;
  // Effective firing probability under this spec.
  double probability(Transform t) const;
};

// Which transforms fired in one pipeline application.
using FiredSet = std::array<bool, 10>;

// Each transform in order fires independently with probability(t). Every
// Bernoulli draw is taken whether or not earlier transforms fired.
Sample apply_pipeline(const Sample& sample, const AugmentSpec& spec, Rng& rng, FiredSet* fired = nullptr);
Sample apply_transform(Transform t, const Sample& sample, const AugmentParams& params, Rng& rng);

Sample transform_horizontal_flip(const Sample& s);
Sample transform_random_rotate90(const Sample& s, Rng& rng);
// Rotates counter-clockwise by k * 90 degrees.
Sample rotate90(const Sample& s, int k);
Sample transform_transpose(const Sample& s);
Sample transform_shift_scale_rotate(const Sample& s, const AugmentParams& p, Rng& rng);
Sample transform_blur(const Sample& s, const AugmentParams& p, Rng& rng);
Sample transform_elastic(const Sample& s, const AugmentParams& p, Rng& rng);
Sample transform_grid_distortion(const Sample& s, const AugmentParams& p, Rng& rng);
Sample transform_optical_distortion(const Sample& s, const AugmentParams& p, Rng& rng);
Sample transform_hue_saturation_value(const Sample& s, const AugmentParams& p, Rng& rng);
Sample transform_clahe(const Sample& s, const AugmentParams& p);

}  // namespace unseg
