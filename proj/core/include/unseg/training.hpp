#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "unseg/augment.hpp"
#include "unseg/data.hpp"
#include "unseg/metrics.hpp"
#include "unseg/unet.hpp"

namespace unseg {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-5;
  double weight_decay = 0.0;
};

// First and second moments for one flat parameter vector.
struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
};

// One bias-corrected Adam update in place. `step` is 1-based.
template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamMoments& state, std::uint64_t step, double lr,
               const AdamConfig& config = {});

template <typename T>
class Adam {
 public:
  Adam(std::vector<Parameter<T>*> params, AdamConfig config = {});
  // Parameters without a gradient are treated as having a zero gradient.
  void step(double lr);
  std::uint64_t steps() const noexcept { return step_; }

 private:
  std::vector<Parameter<T>*> params_;
  std::vector<AdamMoments> state_;
  AdamConfig config_;
  std::uint64_t step_ = 0;
};

// lr_min + (lr_max - lr_min) (1 + cos(pi step / total)) / 2.
// Throws kOutOfRange unless 0 <= step <= total_steps.
double cosine_lr(std::size_t step, std::size_t total_steps, double lr_max, double lr_min);

// Stops after `patience` consecutive epochs whose val loss is not at least
// min_delta below the best so far.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience = 2, double min_delta = 1e-6);
  // Returns true if training should stop after this epoch.
  bool update(double val_loss);
  bool improved() const noexcept { return improved_; }
  double best() const noexcept { return best_; }
  std::optional<std::size_t> best_epoch() const noexcept { return best_epoch_; }
  std::size_t bad_epochs() const noexcept { return bad_epochs_; }

 private:
  std::size_t patience_;
  double min_delta_;
  double best_;
  std::optional<std::size_t> best_epoch_;
  std::size_t bad_epochs_ = 0;
  std::size_t seen_ = 0;
  bool improved_ = false;
};

struct CheckpointMetadata {
  std::uint64_t epoch = 0;
  double val_loss = 0.0;
  double dice = 0.0;
  double jaccard = 0.0;
  std::string rng_state;
  friend bool operator==(const CheckpointMetadata&, const CheckpointMetadata&) = default;
};

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> data;
  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

// In-memory image of the on-disk format: "UNSG", u32 version, preset name,
// input size, decoder widths, metadata, then a table of named f32 tensors
// (parameters followed by batchnorm buffers). All integers little-endian.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::string preset;
  InputSize input_size;
  std::vector<std::size_t> decoder_widths;
  CheckpointMetadata meta;
  std::vector<NamedTensor> tensors;

  UNetConfig model_config() const;
  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

template <typename T>
Checkpoint make_checkpoint(UNet<T>& model, const CheckpointMetadata& meta);
// Copies tensors into a model built from the same preset.
// Throws kPresetMismatch on preset, name or shape disagreement.
template <typename T>
void restore_checkpoint(UNet<T>& model, const Checkpoint& ckpt);
template <typename T>
std::unique_ptr<UNet<T>> build_from_checkpoint(const Checkpoint& ckpt);

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
// Throws kBadMagic, kVersionMismatch, kTruncatedFile.
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);
// Atomic: writes <path>.tmp then renames. Throws kIoError.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct EvalResult {
  double loss = 0.0;
  std::vector<ConfusionCounts> per_image;
  MetricsReport micro;
  MetricsReport per_image_mean;
};

// Eval-mode pass over every batch; threshold 0.5 on probabilities.
template <typename T>
EvalResult evaluate(UNet<T>& model, BatchIterator& batches, double threshold = 0.5);
// As above, but predictions are nearest-resized to each ground-truth mask's
// native resolution before counting.
template <typename T>
EvalResult evaluate_native(UNet<T>& model, const DatasetManifest& manifest, Split split,
                           std::size_t batch_size, double threshold = 0.5);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  MetricsReport val;
  MetricsReport val_per_image;
  double lr = 0.0;  // at the last step of the epoch
  double seconds = 0.0;
};

struct TrainConfig {
  std::size_t epochs_max = 50;
  std::size_t batch_size = 8;
  double lr_max = 1e-3;
  // Non-positive selects lr_max / 100.
  double lr_min = 0.0;
  std::size_t patience = 2;
  std::uint64_t seed = 0;
  AugmentSpec augment;
  std::string preset = "resnet-mini";
  InputSize input_size{64, 64};
  std::vector<std::size_t> decoder_widths;
  std::filesystem::path checkpoint_dir;
  AdamConfig adam;
  std::size_t workers = 0;
  // Split used for validation and early stopping.
  Split val_split = Split::kValid;

  double resolved_lr_min() const { return lr_min > 0.0 ? lr_min : lr_max / 100.0; }
  UNetConfig model_config() const;
  // Throws kInvalidArgument.
  void validate() const;
};

enum class BestSlot { kLoss, kDice, kJaccard };
std::string to_string(BestSlot s);

struct BestCheckpoint {
  BestSlot slot = BestSlot::kLoss;
  std::size_t epoch = 0;
  double value = 0.0;
  std::filesystem::path path;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t stopped_epoch = 0;  // last epoch run, 0-based
  bool early_stopped = false;
  std::vector<BestCheckpoint> best;  // loss, dice, jaccard
  // Validation metrics of the reloaded best-by-loss model.
  EvalResult final_eval;
  std::size_t final_epoch = 0;

  const BestCheckpoint& best_slot(BestSlot s) const;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Trains with one Adam step per batch and a per-step cosine schedule,
// validates after every epoch, keeps three best checkpoints and reloads the
// best-by-loss weights into `model` before the final evaluation.
// Throws kNonFiniteLoss, plus any I/O error.
template <typename T>
TrainReport fit(UNet<T>& model, const DatasetManifest& data, const TrainConfig& config,
                const EpochCallback& on_epoch = {});

// Header "Epoch  Train Loss  Val Loss  mIoU  Dice  Jaccard" plus optional time column.
std::string format_epoch_table(const std::vector<EpochRecord>& epochs, bool with_time);
std::string to_json_line(const EpochRecord& r, bool with_time);

}  // namespace unseg
