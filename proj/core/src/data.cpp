#include "unseg/data.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <thread>

#include "unseg/error.hpp"

namespace unseg {

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kValid:
      return "valid";
    case Split::kTest:
      return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "valid") return Split::kValid;
  if (name == "test") return Split::kTest;
  throw Error(ErrorCode::kInvalidArgument, "unknown split '" + std::string(name) + "'");
}

const std::vector<std::string>& DatasetManifest::split(Split s) const {
  switch (s) {
    case Split::kTrain:
      return train;
    case Split::kValid:
      return valid;
    case Split::kTest:
      return test;
  }
  return train;
}

namespace {

std::vector<std::string> read_split_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kMissingFile, path.string());
  std::vector<std::string> stems;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) stems.push_back(line);
  }
  return stems;
}

}  // namespace

DatasetManifest DatasetManifest::load(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) throw Error(ErrorCode::kMissingFile, root.string());
  DatasetManifest m;
  m.root = root;
  m.train = read_split_file(root / "splits" / "train.txt");
  m.valid = read_split_file(root / "splits" / "valid.txt");
  m.test = read_split_file(root / "splits" / "test.txt");

  std::set<std::string> seen;
  for (Split s : {Split::kTrain, Split::kValid, Split::kTest}) {
    for (const auto& stem : m.split(s)) {
      if (!seen.insert(stem).second) {
        throw Error(ErrorCode::kInvalidArgument, "stem '" + stem + "' listed twice across splits");
      }
      if (!std::filesystem::is_regular_file(m.image_path(stem))) {
        throw Error(ErrorCode::kMissingFile, m.image_path(stem).string());
      }
      if (!std::filesystem::is_regular_file(m.mask_path(stem))) {
        throw Error(ErrorCode::kMissingFile, m.mask_path(stem).string());
      }
    }
  }
  return m;
}

void DatasetManifest::write_splits() const {
  std::error_code ec;
  std::filesystem::create_directories(root / "splits", ec);
  if (ec) throw Error(ErrorCode::kIoError, ec.message());
  for (Split s : {Split::kTrain, Split::kValid, Split::kTest}) {
    const auto path = root / "splits" / (to_string(s) + ".txt");
    std::ofstream out(path, std::ios::binary);
    for (const auto& stem : split(s)) out << stem << '\n';
    if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  }
}

Sample load_sample(const DatasetManifest& manifest, const std::string& stem, InputSize target) {
  Image image = read_image(manifest.image_path(stem), ColorMode::kRgb);
  Image mask = read_image(manifest.mask_path(stem), ColorMode::kGray);
  if (image.height != mask.height || image.width != mask.width) {
    throw Error(ErrorCode::kSizeMismatch, stem + ": image " + std::to_string(image.height) + "x" +
                                              std::to_string(image.width) + " vs mask " +
                                              std::to_string(mask.height) + "x" + std::to_string(mask.width));
  }
  const int h = static_cast<int>(target.height), w = static_cast<int>(target.width);
  Sample s;
  s.stem = stem;
  s.image = resize_bilinear(image, h, w);
  s.mask = binarize(resize_nearest(mask, h, w));
  return s;
}

template <typename T>
Tensor<T> images_to_tensor(const std::vector<Sample>& samples) {
  if (samples.empty()) throw Error(ErrorCode::kEmptyList, "no samples");
  const auto h = static_cast<std::size_t>(samples[0].image.height);
  const auto w = static_cast<std::size_t>(samples[0].image.width);
  Tensor<T> out(Shape{samples.size(), 3, h, w});
  for (std::size_t n = 0; n < samples.size(); ++n) {
    const Image& img = samples[n].image;
    if (static_cast<std::size_t>(img.height) != h || static_cast<std::size_t>(img.width) != w || img.channels != 3) {
      throw Error(ErrorCode::kShapeMismatch, "batch images differ in size");
    }
    for (std::size_t c = 0; c < 3; ++c) {
      const double mean = kImageMean[c], inv_std = 1.0 / kImageStd[c];
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const double v = img.at(static_cast<int>(y), static_cast<int>(x), static_cast<int>(c)) / 255.0;
          out.at(n, c, y, x) = static_cast<T>((v - mean) * inv_std);
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> masks_to_tensor(const std::vector<Sample>& samples) {
  if (samples.empty()) throw Error(ErrorCode::kEmptyList, "no samples");
  const auto h = static_cast<std::size_t>(samples[0].mask.height);
  const auto w = static_cast<std::size_t>(samples[0].mask.width);
  Tensor<T> out(Shape{samples.size(), 1, h, w});
  for (std::size_t n = 0; n < samples.size(); ++n) {
    const Image& m = samples[n].mask;
    if (static_cast<std::size_t>(m.height) != h || static_cast<std::size_t>(m.width) != w) {
      throw Error(ErrorCode::kShapeMismatch, "batch masks differ in size");
    }
    T* dst = out.ptr() + n * h * w;
    for (std::size_t i = 0; i < h * w; ++i) dst[i] = m.pixels[i] ? T{1} : T{0};
  }
  return out;
}

template <typename T>
Tensor<T> image_to_tensor(const Image& image) {
  std::vector<Sample> one(1);
  one[0].image = image;
  return images_to_tensor<T>(one);
}

template Tensor<float> images_to_tensor<float>(const std::vector<Sample>&);
template Tensor<double> images_to_tensor<double>(const std::vector<Sample>&);
template Tensor<float> masks_to_tensor<float>(const std::vector<Sample>&);
template Tensor<double> masks_to_tensor<double>(const std::vector<Sample>&);
template Tensor<float> image_to_tensor<float>(const Image&);
template Tensor<double> image_to_tensor<double>(const Image&);

BatchIterator::BatchIterator(const DatasetManifest& manifest, Split split, InputSize size, BatchOptions options)
    : manifest_(&manifest), split_(split), size_(size), options_(std::move(options)), stems_(manifest.split(split)) {
  if (stems_.empty()) throw Error(ErrorCode::kEmptySplit, "split '" + to_string(split) + "' is empty");
  if (options_.batch_size == 0) throw Error(ErrorCode::kInvalidArgument, "batch size must be positive");
  options_.augment.validate();
  cache_.reserve(stems_.size());
  for (const auto& stem : stems_) cache_.push_back(load_sample(manifest, stem, size_));
  start_epoch(0);
}

void BatchIterator::start_epoch(std::size_t epoch) {
  epoch_ = epoch;
  cursor_ = 0;
  order_.resize(stems_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  if (options_.shuffle) {
    // Fisher-Yates with the portable Rng.
    Rng rng(derive_seed(options_.seed, {0x5348554646ULL, epoch}));
    for (std::size_t i = order_.size(); i > 1; --i) {
      std::swap(order_[i - 1], order_[rng.below(i)]);
    }
  }
}

std::size_t BatchIterator::num_batches() const noexcept {
  return (stems_.size() + options_.batch_size - 1) / options_.batch_size;
}

Sample BatchIterator::materialize(std::size_t index) const {
  if (split_ != Split::kTrain || options_.augment.mode == AugmentMode::kNone) return cache_[index];
  Rng rng(derive_seed(options_.seed, {0x41554703ULL, epoch_, index}));
  Sample s = apply_pipeline(cache_[index], options_.augment, rng);
  // rot90 / transpose swap the sides of non-square inputs.
  const int h = static_cast<int>(size_.height), w = static_cast<int>(size_.width);
  if (s.image.height != h || s.image.width != w) {
    s.image = resize_bilinear(s.image, h, w);
    s.mask = resize_nearest(s.mask, h, w);
  }
  return s;
}

std::optional<Batch> BatchIterator::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  const std::size_t end = std::min(order_.size(), cursor_ + options_.batch_size);
  Batch batch;
  batch.indices.assign(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                       order_.begin() + static_cast<std::ptrdiff_t>(end));
  cursor_ = end;
  batch.samples.resize(batch.indices.size());
  const std::size_t workers = std::min(options_.workers, batch.indices.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < batch.indices.size(); ++i) batch.samples[i] = materialize(batch.indices[i]);
    return batch;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t wkr = 0; wkr < workers; ++wkr) {
    pool.emplace_back([&, wkr] {
      try {
        for (std::size_t i = wkr; i < batch.indices.size(); i += workers) {
          batch.samples[i] = materialize(batch.indices[i]);
        }
      } catch (...) {
        errors[wkr] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return batch;
}

}  // namespace unseg
