#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "unseg/augment.hpp"
#include "unseg/tensor.hpp"
#include "unseg/unet.hpp"

namespace unseg {

enum class Split { kTrain, kValid, kTest };
std::string to_string(Split s);
// "train", "valid" or "test"; throws kInvalidArgument.
Split parse_split(std::string_view name);

// root/{images,masks}/<stem>.png with root/splits/{train,valid,test}.txt.
struct DatasetManifest {
  std::filesystem::path root;
  std::vector<std::string> train;
  std::vector<std::string> valid;
  std::vector<std::string> test;

  std::filesystem::path image_dir() const { return root / "images"; }
  std::filesystem::path mask_dir() const { return root / "masks"; }
  std::filesystem::path image_path(const std::string& stem) const { return image_dir() / (stem + ".png"); }
  std::filesystem::path mask_path(const std::string& stem) const { return mask_dir() / (stem + ".png"); }
  const std::vector<std::string>& split(Split s) const;

  // Verifies split disjointness and that every stem has both files.
  // Throws kMissingFile, kInvalidArgument.
  static DatasetManifest load(const std::filesystem::path& root);
  // Writes the three split files (LF, one stem per line).
  void write_splits() const;
};

// Decodes, checks pre-resize dims, resizes image bilinearly and mask with
// nearest sampling, binarizes the mask at >= 128.
// Throws kMissingFile, kDecodeError, kSizeMismatch.
Sample load_sample(const DatasetManifest& manifest, const std::string& stem, InputSize target);

// Per-channel standardization applied to [0,1] pixel values.
inline constexpr std::array<double, 3> kImageMean{0.485, 0.456, 0.406};
inline constexpr std::array<double, 3> kImageStd{0.229, 0.224, 0.225};

// N x 3 x H x W normalized images / N x 1 x H x W {0,1} masks.
template <typename T>
Tensor<T> images_to_tensor(const std::vector<Sample>& samples);
template <typename T>
Tensor<T> masks_to_tensor(const std::vector<Sample>& samples);
// Single-image N=1 variant.
template <typename T>
Tensor<T> image_to_tensor(const Image& image);

struct Batch {
  std::vector<Sample> samples;
  // Dataset indices within the split, in batch order.
  std::vector<std::size_t> indices;

  std::size_t size() const noexcept { return samples.size(); }
  template <typename T>
  Tensor<T> images() const {
    return images_to_tensor<T>(samples);
  }
  template <typename T>
  Tensor<T> masks() const {
    return masks_to_tensor<T>(samples);
  }
};

struct BatchOptions {
  std::size_t batch_size = 8;
  AugmentSpec augment;  // only honoured on the train split
  std::uint64_t seed = 0;
  bool shuffle = true;
  // 0 or 1 loads on the calling thread.
  std::size_t workers = 0;
};

// Decoded samples are cached on first load; augmentation is redrawn every
// epoch from an rng stream keyed by (seed, epoch, sample index), so batch
// contents do not depend on the worker count.
class BatchIterator {
 public:
  // Throws kEmptySplit.
  BatchIterator(const DatasetManifest& manifest, Split split, InputSize size, BatchOptions options);

  void start_epoch(std::size_t epoch);
  std::optional<Batch> next();
  std::size_t num_batches() const noexcept;
  std::size_t num_samples() const noexcept { return stems_.size(); }
  // Epoch order of dataset indices.
  const std::vector<std::size_t>& order() const noexcept { return order_; }
  Split split() const noexcept { return split_; }

 private:
  Sample materialize(std::size_t index) const;

  const DatasetManifest* manifest_;
  Split split_;
  InputSize size_;
  BatchOptions options_;
  std::vector<std::string> stems_;
  std::vector<Sample> cache_;
  std::vector<std::size_t> order_;
  std::size_t epoch_ = 0;
  std::size_t cursor_ = 0;
};

enum class Texture { kNoise, kMarbleVeins, kPlain };
std::string to_string(Texture t);
Texture parse_texture(std::string_view name);

struct SynthSpec {
  std::size_t n_samples = 24;  // across all splits
  InputSize size{64, 64};
  int cracks_min = 1;
  int cracks_max = 3;
  double width_min = 1.5;  // px
  double width_max = 3.5;
  int steps_min = 8;
  int steps_max = 24;
  double step_min = 2.0;  // px
  double step_max = 5.0;
  double max_turn_deg = 30.0;
  double darken_min = 0.4;
  double darken_max = 0.8;
  std::vector<Texture> textures{Texture::kNoise, Texture::kMarbleVeins, Texture::kPlain};
  // Images whose crack fraction falls outside this band are redrawn.
  double min_crack_fraction = 0.001;
  double max_crack_fraction = 0.10;
  std::uint64_t seed = 0;

  void validate() const;
  // valid = test = round(0.15 n); train takes the rest.
  std::array<std::size_t, 3> split_sizes() const;
};

struct Polyline {
  std::vector<std::array<double, 2>> points;  // (x, y) pixel centres
  double width = 1.0;
};

struct SynthImage {
  Sample sample;
  std::vector<Polyline> cracks;
  Texture texture = Texture::kPlain;
};

// Deterministic in (spec.seed, index).
SynthImage synthesize_image(const SynthSpec& spec, std::size_t index);
// Writes the dataset tree under root. Throws kIoError.
DatasetManifest generate_synthetic(const SynthSpec& spec, const std::filesystem::path& root);

// Distance from point (x, y) to the polyline's centre line.
double distance_to_polyline(const Polyline& line, double x, double y);

}  // namespace unseg
