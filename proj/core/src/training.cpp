#include "unseg/training.hpp"

#include <bit>
#include <chrono>
#include <limits>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <numbers>

#include "unseg/error.hpp"
#include "unseg/ops.hpp"

namespace unseg {

template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamMoments& state, std::uint64_t step, double lr,
               const AdamConfig& c) {
  if (params.size() != grads.size()) throw Error(ErrorCode::kShapeMismatch, "adam: params and grads differ in size");
  if (step == 0) throw Error(ErrorCode::kOutOfRange, "adam step count is 1-based");
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double g = static_cast<double>(grads[i]);
    if (c.weight_decay != 0.0) g += c.weight_decay * static_cast<double>(params[i]);
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * g;
    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] = static_cast<T>(static_cast<double>(params[i]) - lr * m_hat / (std::sqrt(v_hat) + c.eps));
  }
}

template <typename T>
Adam<T>::Adam(std::vector<Parameter<T>*> params, AdamConfig config)
    : params_(std::move(params)), state_(params_.size()), config_(config) {}

template <typename T>
void Adam<T>::step(double lr) {
  ++step_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter<T>& p = *params_[i];
    if (p.grad.is_null()) p.grad = Tensor<T>::zeros_like(p.value);
    adam_step<T>(p.value.data(), p.grad.data(), state_[i], step_, lr, config_);
  }
}

double cosine_lr(std::size_t step, std::size_t total_steps, double lr_max, double lr_min) {
  if (total_steps == 0 || step > total_steps) {
    throw Error(ErrorCode::kOutOfRange,
                "cosine_lr step " + std::to_string(step) + " outside [0, " + std::to_string(total_steps) + "]");
  }
  const double t = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * t));
}

EarlyStopping::EarlyStopping(std::size_t patience, double min_delta)
    : patience_(patience), min_delta_(min_delta), best_(std::numeric_limits<double>::infinity()) {
  if (patience_ == 0) throw Error(ErrorCode::kInvalidArgument, "patience must be >= 1");
}

bool EarlyStopping::update(double val_loss) {
  const std::size_t epoch = seen_++;
  improved_ = !best_epoch_ || val_loss <= best_ - min_delta_;
  if (improved_) {
    best_ = val_loss;
    best_epoch_ = epoch;
    bad_epochs_ = 0;
    return false;
  }
  ++bad_epochs_;
  return bad_epochs_ >= patience_;
}

// ---- checkpoints ----

UNetConfig Checkpoint::model_config() const {
  UNetConfig cfg;
  cfg.encoder = preset_by_name(preset);
  cfg.decoder_widths = decoder_widths;
  cfg.input_size = input_size;
  return cfg;
}

template <typename T>
Checkpoint make_checkpoint(UNet<T>& model, const CheckpointMetadata& meta) {
  Checkpoint ckpt;
  ckpt.preset = model.config().encoder.name;
  ckpt.input_size = model.config().input_size;
  ckpt.decoder_widths = model.config().resolved_decoder_widths();
  ckpt.meta = meta;
  for (const auto& np : model.named_parameters()) {
    const auto& v = np.param->value;
    ckpt.tensors.push_back({np.name, v.shape(), std::vector<float>(v.data().begin(), v.data().end())});
  }
  for (const auto& nb : model.named_buffers()) {
    const auto& v = *nb.tensor;
    ckpt.tensors.push_back({nb.name, v.shape(), std::vector<float>(v.data().begin(), v.data().end())});
  }
  return ckpt;
}

template <typename T>
void restore_checkpoint(UNet<T>& model, const Checkpoint& ckpt) {
  if (ckpt.preset != model.config().encoder.name) {
    throw Error(ErrorCode::kPresetMismatch,
                "checkpoint preset '" + ckpt.preset + "' does not match model '" + model.config().encoder.name + "'");
  }
  if (ckpt.decoder_widths != model.config().resolved_decoder_widths()) {
    throw Error(ErrorCode::kPresetMismatch, "checkpoint decoder widths do not match the model");
  }
  std::vector<std::pair<std::string, Tensor<T>*>> targets;
  for (auto& np : model.named_parameters()) targets.emplace_back(np.name, &np.param->value);
  for (auto& nb : model.named_buffers()) targets.emplace_back(nb.name, nb.tensor);
  if (targets.size() != ckpt.tensors.size()) {
    throw Error(ErrorCode::kPresetMismatch, "checkpoint holds " + std::to_string(ckpt.tensors.size()) +
                                                " tensors, model expects " + std::to_string(targets.size()));
  }
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const NamedTensor& src = ckpt.tensors[i];
    Tensor<T>& dst = *targets[i].second;
    if (src.name != targets[i].first || src.shape != dst.shape()) {
      throw Error(ErrorCode::kPresetMismatch, "tensor '" + src.name + "' " + shape_to_string(src.shape) +
                                                  " does not match '" + targets[i].first + "' " +
                                                  shape_to_string(dst.shape()));
    }
  }
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& src = ckpt.tensors[i].data;
    auto dst = targets[i].second->data();
    for (std::size_t k = 0; k < src.size(); ++k) dst[k] = static_cast<T>(src[k]);
  }
}

template <typename T>
std::unique_ptr<UNet<T>> build_from_checkpoint(const Checkpoint& ckpt) {
  auto model = build_unet<T>(ckpt.model_config(), 0);
  restore_checkpoint(*model, ckpt);
  return model;
}

namespace {

constexpr char kMagic[4] = {'U', 'N', 'S', 'G'};

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void need(std::uint64_t n) const {
    if (n > in_.size() - pos_) {
      throw Error(ErrorCode::kTruncatedFile, "checkpoint ends at byte " + std::to_string(in_.size()) +
                                                 ", needed " + std::to_string(n) + " more after " +
                                                 std::to_string(pos_));
    }
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c) {
  Writer w;
  for (char ch : kMagic) w.u8(static_cast<std::uint8_t>(ch));
  w.u32(Checkpoint::kVersion);
  w.str(c.preset);
  w.u32(static_cast<std::uint32_t>(c.input_size.height));
  w.u32(static_cast<std::uint32_t>(c.input_size.width));
  w.u32(static_cast<std::uint32_t>(c.decoder_widths.size()));
  for (auto d : c.decoder_widths) w.u32(static_cast<std::uint32_t>(d));
  w.u64(c.meta.epoch);
  w.f64(c.meta.val_loss);
  w.f64(c.meta.dice);
  w.f64(c.meta.jaccard);
  w.str(c.meta.rng_state);
  w.u32(static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& t : c.tensors) {
    w.str(t.name);
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.u64(d);
    w.u64(t.data.size() * sizeof(float));
    for (float v : t.data) w.f32(v);
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  // A file cut inside the magic still counts as truncated if what is there matches.
  for (std::size_t i = 0; i < 4; ++i) {
    if (i == bytes.size()) throw Error(ErrorCode::kTruncatedFile, "checkpoint ends inside the magic");
    if (r.u8() != static_cast<std::uint8_t>(kMagic[i])) throw Error(ErrorCode::kBadMagic, "not an unseg checkpoint");
  }
  const std::uint32_t version = r.u32();
  if (version != Checkpoint::kVersion) {
    throw Error(ErrorCode::kVersionMismatch, "checkpoint version " + std::to_string(version) + ", expected " +
                                                 std::to_string(Checkpoint::kVersion));
  }
  Checkpoint c;
  c.preset = r.str();
  c.input_size.height = r.u32();
  c.input_size.width = r.u32();
  const std::uint32_t n_dec = r.u32();
  r.need(4ULL * n_dec);
  for (std::uint32_t i = 0; i < n_dec; ++i) c.decoder_widths.push_back(r.u32());
  c.meta.epoch = r.u64();
  c.meta.val_loss = r.f64();
  c.meta.dice = r.f64();
  c.meta.jaccard = r.f64();
  c.meta.rng_state = r.str();
  const std::uint32_t n_tensors = r.u32();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    NamedTensor t;
    t.name = r.str();
    const std::uint32_t rank = r.u32();
    r.need(8ULL * rank);
    for (std::uint32_t d = 0; d < rank; ++d) t.shape.push_back(r.u64());
    const std::uint64_t bytes_len = r.u64();
    if (bytes_len != shape_numel(t.shape) * sizeof(float)) {
      throw Error(ErrorCode::kInvalidArgument, "tensor '" + t.name + "' byte length disagrees with its shape");
    }
    r.need(bytes_len);
    t.data.resize(bytes_len / sizeof(float));
    for (auto& v : t.data) v = r.f32();
    c.tensors.push_back(std::move(t));
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = serialize_checkpoint(ckpt);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::FILE* f = std::fopen(tmp.string().c_str(), "wb");
    if (!f) throw Error(ErrorCode::kIoError, "cannot open " + tmp.string());
    const bool ok = std::fwrite(bytes.data(), 1, bytes.size(), f) == bytes.size();
    if (std::fclose(f) != 0 || !ok) throw Error(ErrorCode::kIoError, "cannot write " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot rename to " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw Error(ErrorCode::kMissingFile, path.string());
  std::FILE* f = std::fopen(path.string().c_str(), "rb");
  if (!f) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes;
  std::uint8_t buf[1 << 16];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) bytes.insert(bytes.end(), buf, buf + n);
  std::fclose(f);
  return deserialize_checkpoint(bytes);
}

// ---- evaluation ----

namespace {

template <typename T>
Image mask_plane(const Tensor<T>& masks, std::size_t n) {
  const std::size_t h = masks.dim(2), w = masks.dim(3);
  Image out(static_cast<int>(h), static_cast<int>(w), 1);
  const T* src = masks.ptr() + n * h * w;
  for (std::size_t i = 0; i < h * w; ++i) out.pixels[i] = src[i] != T{0} ? 1 : 0;
  return out;
}

EvalResult finish_eval(double loss_sum, std::size_t pixel_count, std::vector<ConfusionCounts> per_image) {
  EvalResult r;
  r.loss = pixel_count ? loss_sum / static_cast<double>(pixel_count) : 0.0;
  r.per_image = std::move(per_image);
  r.micro = summarize(r.per_image);
  r.per_image_mean = summarize_per_image(r.per_image);
  return r;
}

}  // namespace

template <typename T>
EvalResult evaluate(UNet<T>& model, BatchIterator& batches, double threshold) {
  batches.start_epoch(0);
  double loss_sum = 0.0;
  std::size_t pixels = 0;
  std::vector<ConfusionCounts> per_image;
  while (auto batch = batches.next()) {
    const Tensor<T> x = batch->images<T>();
    const Tensor<T> y = batch->masks<T>();
    const Tensor<T> logits = model.predict_logits(x);
    loss_sum += static_cast<double>(bce_with_logits_value(logits, y)) * static_cast<double>(y.numel());
    pixels += y.numel();
    const Tensor<T> pred = threshold_probabilities(sigmoid(logits), threshold);
    for (std::size_t n = 0; n < batch->size(); ++n) {
      per_image.push_back(count_pixels(mask_plane(pred, n), batch->samples[n].mask));
    }
  }
  return finish_eval(loss_sum, pixels, std::move(per_image));
}

template <typename T>
EvalResult evaluate_native(UNet<T>& model, const DatasetManifest& manifest, Split split, std::size_t batch_size,
                           double threshold) {
  BatchOptions opts;
  opts.batch_size = batch_size;
  opts.shuffle = false;
  BatchIterator batches(manifest, split, model.config().input_size, opts);
  double loss_sum = 0.0;
  std::size_t pixels = 0;
  std::vector<ConfusionCounts> per_image;
  while (auto batch = batches.next()) {
    const Tensor<T> x = batch->images<T>();
    const Tensor<T> y = batch->masks<T>();
    const Tensor<T> logits = model.predict_logits(x);
    loss_sum += static_cast<double>(bce_with_logits_value(logits, y)) * static_cast<double>(y.numel());
    pixels += y.numel();
    const Tensor<T> pred = threshold_probabilities(sigmoid(logits), threshold);
    for (std::size_t n = 0; n < batch->size(); ++n) {
      const Image gt = binarize(read_image(manifest.mask_path(batch->samples[n].stem), ColorMode::kGray));
      const Image p = resize_nearest(mask_plane(pred, n), gt.height, gt.width);
      per_image.push_back(count_pixels(p, gt));
    }
  }
  return finish_eval(loss_sum, pixels, std::move(per_image));
}

// ---- training loop ----

UNetConfig TrainConfig::model_config() const {
  UNetConfig cfg;
  cfg.encoder = preset_by_name(preset);
  cfg.decoder_widths = decoder_widths;
  cfg.input_size = input_size;
  return cfg;
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorCode::kInvalidArgument, what);
  };
  require(epochs_max >= 1, "epochs must be >= 1");
  require(batch_size >= 1, "batch size must be >= 1");
  require(lr_max > 0.0 && resolved_lr_min() > 0.0 && resolved_lr_min() <= lr_max, "need 0 < lr_min <= lr_max");
  require(patience >= 1, "patience must be >= 1");
  require(input_size.height > 0 && input_size.width > 0, "input size must be positive");
  augment.validate();
  (void)preset_by_name(preset);
}

std::string to_string(BestSlot s) {
  switch (s) {
    case BestSlot::kLoss:
      return "loss";
    case BestSlot::kDice:
      return "dice";
    case BestSlot::kJaccard:
      return "jaccard";
  }
  return "loss";
}

const BestCheckpoint& TrainReport::best_slot(BestSlot s) const {
  for (const auto& b : best) {
    if (b.slot == s) return b;
  }
  throw Error(ErrorCode::kInvalidArgument, "no checkpoint recorded for slot " + to_string(s));
}

template <typename T>
TrainReport fit(UNet<T>& model, const DatasetManifest& data, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (model.config().encoder.name != config.preset) {
    throw Error(ErrorCode::kPresetMismatch, "model preset differs from the training config");
  }
  BatchOptions train_opts;
  train_opts.batch_size = config.batch_size;
  train_opts.augment = config.augment;
  train_opts.seed = config.seed;
  train_opts.workers = config.workers;
  BatchIterator train_it(data, Split::kTrain, config.input_size, train_opts);

  BatchOptions val_opts;
  val_opts.batch_size = config.batch_size;
  val_opts.seed = config.seed;
  val_opts.shuffle = false;
  val_opts.workers = config.workers;
  BatchIterator val_it(data, config.val_split, config.input_size, val_opts);

  if (!config.checkpoint_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(config.checkpoint_dir, ec);
    if (ec) throw Error(ErrorCode::kIoError, config.checkpoint_dir.string() + ": " + ec.message());
  }

  Adam<T> optimizer(model.parameters(), config.adam);
  EarlyStopping stopper(config.patience);
  const std::size_t total_steps = config.epochs_max * train_it.num_batches();
  const double lr_min = config.resolved_lr_min();
  std::size_t step = 0;

  TrainReport report;
  report.best = {{BestSlot::kLoss, 0, 0.0, {}}, {BestSlot::kDice, 0, 0.0, {}}, {BestSlot::kJaccard, 0, 0.0, {}}};
  std::array<bool, 3> have_best{};
  Checkpoint best_loss_ckpt;

  for (std::size_t epoch = 0; epoch < config.epochs_max; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    model.set_mode(NormMode::kTrain);
    train_it.start_epoch(epoch);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    double lr = config.lr_max;
    while (auto batch = train_it.next()) {
      lr = cosine_lr(step, total_steps, config.lr_max, lr_min);
      Tape<T> tape;
      Var<T> x = tape.leaf(batch->images<T>(), false);
      Var<T> y = tape.leaf(batch->masks<T>(), false);
      Var<T> loss = bce_with_logits(model.forward(x), y);
      const double value = static_cast<double>(loss.value().item());
      if (!std::isfinite(value)) {
        throw Error(ErrorCode::kNonFiniteLoss, "loss is " + std::to_string(value) + " at epoch " +
                                                   std::to_string(epoch) + ", step " + std::to_string(step) +
                                                   ", lr " + std::to_string(lr));
      }
      model.zero_grad();
      tape.backward(loss);
      optimizer.step(lr);
      ++step;
      loss_sum += value * static_cast<double>(batch->size());
      seen += batch->size();
    }

    EvalResult val = evaluate(model, val_it);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    rec.val_loss = val.loss;
    rec.val = val.micro;
    rec.val_per_image = val.per_image_mean;
    rec.lr = lr;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.epochs.push_back(rec);
    report.stopped_epoch = epoch;

    CheckpointMetadata meta{epoch, val.loss, val.micro.dice, val.micro.jaccard,
                            "seed=" + std::to_string(config.seed) + ";step=" + std::to_string(step)};
    const std::array<double, 3> scores{val.loss, val.micro.dice, val.micro.jaccard};
    std::optional<Checkpoint> ckpt;
    for (std::size_t s = 0; s < 3; ++s) {
      const bool better = !have_best[s] || (s == 0 ? scores[s] < report.best[s].value : scores[s] > report.best[s].value);
      if (!better) continue;
      have_best[s] = true;
      report.best[s].epoch = epoch;
      report.best[s].value = scores[s];
      if (!ckpt) ckpt = make_checkpoint(model, meta);
      if (s == 0) best_loss_ckpt = *ckpt;
      if (!config.checkpoint_dir.empty()) {
        report.best[s].path = config.checkpoint_dir / ("best_" + to_string(report.best[s].slot) + ".unsg");
        save_checkpoint(report.best[s].path, *ckpt);
      }
    }

    if (on_epoch) on_epoch(rec);
    if (stopper.update(val.loss)) {
      report.early_stopped = true;
      break;
    }
  }

  restore_checkpoint(model, best_loss_ckpt);
  report.final_epoch = best_loss_ckpt.meta.epoch;
  report.final_eval = evaluate(model, val_it);
  return report;
}

std::string format_epoch_table(const std::vector<EpochRecord>& epochs, bool with_time) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%5s  %10s  %10s  %8s  %8s  %8s", "Epoch", "Train Loss", "Val Loss", "mIoU", "Dice",
                "Jaccard");
  out += buf;
  if (with_time) out += "  time/epoch";
  out += "\n";
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof buf, "%5zu  %10.4f  %10.4f  %8.4f  %8.4f  %8.4f", e.epoch, e.train_loss, e.val_loss,
                  e.val.miou, e.val.dice, e.val.jaccard);
    out += buf;
    if (with_time) {
      std::snprintf(buf, sizeof buf, "  %9.2fs", e.seconds);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

std::string to_json_line(const EpochRecord& r, bool with_time) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["train_loss"] = r.train_loss;
  j["val_loss"] = r.val_loss;
  j["miou"] = r.val.miou;
  j["dice"] = r.val.dice;
  j["jaccard"] = r.val.jaccard;
  j["aggregation"] = to_string(r.val.aggregation);
  j["dice_per_image"] = r.val_per_image.dice;
  j["jaccard_per_image"] = r.val_per_image.jaccard;
  j["lr"] = r.lr;
  if (with_time) j["seconds"] = r.seconds;
  return j.dump();
}

#define UNSEG_INSTANTIATE_TRAINING(T)                                                                          \
  template void adam_step<T>(std::span<T>, std::span<const T>, AdamMoments&, std::uint64_t, double,           \
                             const AdamConfig&);                                                               \
  template class Adam<T>;                                                                                      \
  template Checkpoint make_checkpoint<T>(UNet<T>&, const CheckpointMetadata&);                                 \
  template void restore_checkpoint<T>(UNet<T>&, const Checkpoint&);                                            \
  template std::unique_ptr<UNet<T>> build_from_checkpoint<T>(const Checkpoint&);                               \
  template EvalResult evaluate<T>(UNet<T>&, BatchIterator&, double);                                           \
  template EvalResult evaluate_native<T>(UNet<T>&, const DatasetManifest&, Split, std::size_t, double);        \
  template TrainReport fit<T>(UNet<T>&, const DatasetManifest&, const TrainConfig&, const EpochCallback&);

UNSEG_INSTANTIATE_TRAINING(float)
UNSEG_INSTANTIATE_TRAINING(double)

}  // namespace unseg
