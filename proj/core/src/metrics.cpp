#include "unseg/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <json.hpp>

#include "unseg/error.hpp"

namespace unseg {

ConfusionCounts& ConfusionCounts::merge(const ConfusionCounts& o) noexcept {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  tn += o.tn;
  return *this;
}

ConfusionCounts count_pixels(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt) {
  if (pred.size() != gt.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                "mask sizes differ: " + std::to_string(pred.size()) + " vs " + std::to_string(gt.size()));
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0, g = gt[i] != 0;
    if (p && g) {
      ++c.tp;
    } else if (p) {
      ++c.fp;
    } else if (g) {
      ++c.fn;
    } else {
      ++c.tn;
    }
  }
  return c;
}

ConfusionCounts count_pixels(const Image& pred, const Image& gt) {
  if (pred.height != gt.height || pred.width != gt.width || pred.channels != gt.channels) {
    throw Error(ErrorCode::kShapeMismatch, "prediction and ground-truth masks differ in shape");
  }
  return count_pixels(std::span<const std::uint8_t>(pred.pixels), std::span<const std::uint8_t>(gt.pixels));
}

ConfusionCounts accumulate(ConfusionCounts counts, const Image& pred, const Image& gt) {
  return counts.merge(count_pixels(pred, gt));
}

double dice(const ConfusionCounts& c) noexcept {
  const double denom = 2.0 * c.tp + c.fp + c.fn;
  return denom == 0.0 ? 1.0 : 2.0 * c.tp / denom;
}

double jaccard(const ConfusionCounts& c) noexcept {
  const double denom = static_cast<double>(c.tp) + c.fp + c.fn;
  return denom == 0.0 ? 1.0 : c.tp / denom;
}

std::string to_string(Aggregation a) { return a == Aggregation::kMicro ? "micro" : "per_image_mean"; }

double miou(std::span<const ConfusionCounts> per_image) {
  if (per_image.empty()) throw Error(ErrorCode::kEmptyList, "miou needs at least one image");
  double sum = 0.0;
  for (const auto& c : per_image) sum += jaccard(c);
  return sum / static_cast<double>(per_image.size());
}

double miou_micro(std::span<const ConfusionCounts> per_image) {
  if (per_image.empty()) throw Error(ErrorCode::kEmptyList, "miou needs at least one image");
  ConfusionCounts total;
  for (const auto& c : per_image) total.merge(c);
  return jaccard(total);
}

MetricsReport summarize(std::span<const ConfusionCounts> per_image) {
  if (per_image.empty()) throw Error(ErrorCode::kEmptyList, "no images to summarize");
  ConfusionCounts total;
  for (const auto& c : per_image) total.merge(c);
  MetricsReport r;
  r.miou = miou(per_image);
  r.dice = dice(total);
  r.jaccard = jaccard(total);
  r.aggregation = Aggregation::kMicro;
  r.n_images = per_image.size();
  return r;
}

MetricsReport summarize_per_image(std::span<const ConfusionCounts> per_image) {
  if (per_image.empty()) throw Error(ErrorCode::kEmptyList, "no images to summarize");
  MetricsReport r;
  for (const auto& c : per_image) {
    r.dice += dice(c);
    r.jaccard += jaccard(c);
  }
  const double n = static_cast<double>(per_image.size());
  r.dice /= n;
  r.jaccard /= n;
  r.miou = r.jaccard;
  r.aggregation = Aggregation::kPerImageMean;
  r.n_images = per_image.size();
  return r;
}

std::string to_json_line(const EvalRecord& r) {
  nlohmann::ordered_json j;
  j["split"] = r.split;
  j["model"] = r.model;
  j["augment"] = r.augment;
  j["loss"] = r.loss;
  j["miou"] = r.metrics.miou;
  j["dice"] = r.metrics.dice;
  j["jaccard"] = r.metrics.jaccard;
  j["aggregation"] = to_string(r.metrics.aggregation);
  return j.dump();
}

std::string format_table(const std::vector<EvalRecord>& rows, const std::string& first_column,
                         const std::string& loss_column) {
  std::size_t width = first_column.size();
  for (const auto& r : rows) width = std::max(width, r.model.size());
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %9s  %8s  %8s  %8s\n", static_cast<int>(width), first_column.c_str(),
                loss_column.c_str(), "mIoU", "Dice", "Jaccard");
  out += buf;
  out += std::string(width + 41, '-') + "\n";
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-*s  %9.4f  %8.4f  %8.4f  %8.4f\n", static_cast<int>(width), r.model.c_str(),
                  r.loss, r.metrics.miou, r.metrics.dice, r.metrics.jaccard);
    out += buf;
  }
  return out;
}

}  // namespace unseg
