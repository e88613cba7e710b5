#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "unseg/image.hpp"

namespace unseg {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const noexcept { return tp + fp + fn + tn; }
  ConfusionCounts& merge(const ConfusionCounts& other) noexcept;
  friend ConfusionCounts merge(ConfusionCounts a, const ConfusionCounts& b) noexcept { return a.merge(b); }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

// Masks are read as binary (nonzero = crack). Throws kShapeMismatch.
ConfusionCounts accumulate(ConfusionCounts counts, const Image& pred, const Image& gt);
ConfusionCounts count_pixels(const Image& pred, const Image& gt);
// Flat {0,1} byte masks of equal length.
ConfusionCounts count_pixels(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt);

// Empty-vs-empty (tp = fp = fn = 0) scores 1.0.
double dice(const ConfusionCounts& c) noexcept;
double jaccard(const ConfusionCounts& c) noexcept;

enum class Aggregation { kMicro, kPerImageMean };
std::string to_string(Aggregation a);

// Crack-class IoU averaged over images. Throws kEmptyList.
double miou(std::span<const ConfusionCounts> per_image);
// IoU of the summed counts. Throws kEmptyList.
double miou_micro(std::span<const ConfusionCounts> per_image);

struct MetricsReport {
  double miou = 0.0;
  double dice = 0.0;
  double jaccard = 0.0;
  Aggregation aggregation = Aggregation::kMicro;
  std::size_t n_images = 0;
};

// Primary report: micro Dice/Jaccard with per-image mIoU.
MetricsReport summarize(std::span<const ConfusionCounts> per_image);
// Every statistic computed per image then averaged.
MetricsReport summarize_per_image(std::span<const ConfusionCounts> per_image);

// One row of an evaluation table.
struct EvalRecord {
  std::string split;
  std::string model;
  std::string augment;
  double loss = 0.0;
  MetricsReport metrics;
};

// Single-line JSON object with keys
// split, model, augment, loss, miou, dice, jaccard, aggregation.
std::string to_json_line(const EvalRecord& r);
// Fixed-width UTF-8 table with a header row.
std::string format_table(const std::vector<EvalRecord>& rows, const std::string& first_column = "Model",
                         const std::string& loss_column = "Loss");

}  // namespace unseg
