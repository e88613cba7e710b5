#include "unseg/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <ostream>
#include <random>
#include <sstream>

#include "unseg/augment.hpp"
#include "unseg/data.hpp"
#include "unseg/error.hpp"
#include "unseg/gradcheck.hpp"
#include "unseg/metrics.hpp"
#include "unseg/ops.hpp"
#include "unseg/training.hpp"
#include "unseg/unet.hpp"

namespace unseg::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMissingFile:
    case ErrorCode::kDecodeError:
    case ErrorCode::kIoError:
    case ErrorCode::kTruncatedFile:
    case ErrorCode::kBadMagic:
    case ErrorCode::kVersionMismatch:
    case ErrorCode::kSizeMismatch:
    case ErrorCode::kEmptySplit:
      return kExitIo;
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kUnknownPreset:
    case ErrorCode::kOutOfRange:
    case ErrorCode::kBadInputSize:
      return kExitUsage;
    default:
      return kExitFailure;
  }
}

bool fp64_enabled() {
  const char* v = std::getenv(kFp64EnvVar);
  return v != nullptr && *v != '\0' && std::string(v) != "0";
}

std::string make_run_id() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%SZ", &tm);
  std::random_device rd;
  char suffix[16];
  std::snprintf(suffix, sizeof suffix, "%08x", rd());
  return std::string(stamp) + "-" + suffix;
}

// Appends one JSON object per line to <dir>/run.log.
class RunLog {
 public:
  RunLog() = default;
  RunLog(const fs::path& dir, std::string command, json config) : run_id_(make_run_id()), command_(std::move(command)) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::kIoError, dir.string() + ": " + ec.message());
    path_ = dir / "run.log";
    json start;
    start["event"] = "start";
    start["run_id"] = run_id_;
    start["command"] = command_;
    start["config"] = std::move(config);
    start["fp64"] = fp64_enabled();
    write(start);
  }

  bool active() const { return !path_.empty(); }
  const std::string& run_id() const { return run_id_; }

  void write(json record) {
    if (!active()) return;
    if (!record.contains("run_id")) {
      json with_id;
      with_id["run_id"] = run_id_;
      for (auto& [k, v] : record.items()) with_id[k] = v;
      record = std::move(with_id);
    }
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    out << record.dump() << '\n';
    if (!out) throw Error(ErrorCode::kIoError, "cannot append to " + path_.string());
  }

  void finish(const std::string& status, json metrics, const std::vector<fs::path>& artifacts) {
    json end;
    end["event"] = "end";
    end["status"] = status;
    end["metrics"] = std::move(metrics);
    json paths = json::array();
    for (const auto& p : artifacts) paths.push_back(p.string());
    end["artifacts"] = std::move(paths);
    write(std::move(end));
  }

 private:
  fs::path path_;
  std::string run_id_;
  std::string command_;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
}

InputSize parse_size(const std::string& text) {
  const auto x = text.find('x');
  try {
    std::size_t used = 0;
    if (x == std::string::npos) {
      const long v = std::stol(text, &used);
      if (used == text.size() && v > 0) return {static_cast<std::size_t>(v), static_cast<std::size_t>(v)};
    } else {
      const long h = std::stol(text.substr(0, x), &used);
      const bool h_ok = used == x;
      const long w = std::stol(text.substr(x + 1), &used);
      if (h_ok && used == text.size() - x - 1 && h > 0 && w > 0) {
        return {static_cast<std::size_t>(h), static_cast<std::size_t>(w)};
      }
    }
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::kInvalidArgument, "bad size '" + text + "' (expected N or HxW)");
}

std::string size_to_string(InputSize s) { return std::to_string(s.height) + "x" + std::to_string(s.width); }

json metrics_json(const MetricsReport& m) {
  json j;
  j["miou"] = m.miou;
  j["dice"] = m.dice;
  j["jaccard"] = m.jaccard;
  j["aggregation"] = to_string(m.aggregation);
  j["n_images"] = m.n_images;
  return j;
}

std::vector<EvalRecord> eval_records(const std::string& split, const std::string& model, const std::string& augment,
                                     const EvalResult& r) {
  return {{split, model, augment, r.loss, r.micro}, {split, model, augment, r.loss, r.per_image_mean}};
}

// Appends the aggregation to the model column for display.
std::vector<EvalRecord> labelled(std::vector<EvalRecord> rows) {
  for (auto& r : rows) r.model += " [" + to_string(r.metrics.aggregation) + "]";
  return rows;
}

// ---- synth ----

struct SynthOptions {
  std::string out;
  long n = 24;
  std::string size = "64";
  std::uint64_t seed = 0;
  int cracks_min = 1;
  int cracks_max = 3;
  double width_min = 1.5;
  double width_max = 3.5;
  std::vector<std::string> textures;
};

int cmd_synth(const SynthOptions& o, std::ostream& out) {
  if (o.n < 1) throw Error(ErrorCode::kInvalidArgument, "--n must be at least 1");
  SynthSpec spec;
  spec.n_samples = static_cast<std::size_t>(o.n);
  spec.size = parse_size(o.size);
  spec.seed = o.seed;
  spec.cracks_min = o.cracks_min;
  spec.cracks_max = o.cracks_max;
  spec.width_min = o.width_min;
  spec.width_max = o.width_max;
  if (!o.textures.empty()) {
    spec.textures.clear();
    for (const auto& t : o.textures) spec.textures.push_back(parse_texture(t));
  }
  spec.validate();
  const DatasetManifest m = generate_synthetic(spec, o.out);
  out << "wrote " << spec.n_samples << " samples (" << size_to_string(spec.size) << ") to " << o.out << ": "
      << m.train.size() << " train / " << m.valid.size() << " valid / " << m.test.size() << " test\n";
  return kExitOk;
}

// ---- train ----

struct TrainOptions {
  std::string data;
  std::string preset = "resnet-mini";
  std::string size;
  std::string augment = "none";
  bool force_p1 = false;
  std::size_t epochs = 50;
  std::size_t batch_size = 0;
  double lr = 1e-3;
  double lr_min = 0.0;
  std::size_t patience = 2;
  std::uint64_t seed = 0;
  std::string out;
  std::string val_split = "valid";
  std::size_t workers = 0;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-5;
  double weight_decay = 0.0;
};

TrainConfig make_train_config(const TrainOptions& o) {
  TrainConfig c;
  c.preset = o.preset;
  preset_by_name(o.preset);  // validates the name early
  c.input_size = o.size.empty() ? default_input_size(o.preset) : parse_size(o.size);
  c.batch_size = o.batch_size ? o.batch_size : default_batch_size(o.preset);
  c.epochs_max = o.epochs;
  c.lr_max = o.lr;
  c.lr_min = o.lr_min;
  c.patience = o.patience;
  c.seed = o.seed;
  c.augment = AugmentSpec::parse(o.augment);
  c.augment.force_p1 = o.force_p1;
  c.val_split = parse_split(o.val_split);
  c.workers = o.workers;
  c.adam = AdamConfig{o.beta1, o.beta2, o.eps, o.weight_decay};
  c.validate();
  return c;
}

json train_config_json(const TrainConfig& c, const std::string& data) {
  json j;
  j["data"] = data;
  j["preset"] = c.preset;
  j["size"] = size_to_string(c.input_size);
  j["augment"] = c.augment.to_string();
  j["force_p1"] = c.augment.force_p1;
  j["epochs"] = c.epochs_max;
  j["batch_size"] = c.batch_size;
  j["lr_max"] = c.lr_max;
  j["lr_min"] = c.resolved_lr_min();
  j["patience"] = c.patience;
  j["seed"] = c.seed;
  j["val_split"] = to_string(c.val_split);
  j["workers"] = c.workers;
  j["adam"] = {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps},
               {"weight_decay", c.adam.weight_decay}};
  return j;
}

struct TrainOutcome {
  TrainReport report;
  std::string report_table;
};

template <typename T>
TrainOutcome train_model(const DatasetManifest& m, TrainConfig config, const fs::path& out_dir, RunLog& log,
                         std::ostream& out) {
  config.checkpoint_dir = out_dir / "checkpoints";
  auto model = build_unet<T>(config.model_config(), config.seed);
  out << format_epoch_table({}, true);
  const TrainReport report = fit(*model, m, config, [&](const EpochRecord& e) {
    std::string row = format_epoch_table({e}, true);
    out << row.substr(row.find('\n') + 1) << std::flush;
    json rec{{"event", "epoch"}};
    const json fields = json::parse(to_json_line(e, true));
    for (const auto& [k, v] : fields.items()) rec[k] = v;
    log.write(std::move(rec));
  });

  std::ostringstream table;
  table << format_epoch_table(report.epochs, false);
  table << "\nstopped after epoch " << report.stopped_epoch << (report.early_stopped ? " (early stop)" : "")
        << "; best-by-loss epoch " << report.final_epoch << " reloaded\n\n";
  table << format_table(labelled(eval_records(to_string(config.val_split), config.preset,
                                              config.augment.to_string(), report.final_eval)),
                        "Model", "Val Loss");

  std::ostringstream jsonl;
  for (const auto& e : report.epochs) jsonl << to_json_line(e, false) << '\n';
  for (const auto& r : eval_records(to_string(config.val_split), config.preset, config.augment.to_string(),
                                    report.final_eval)) {
    jsonl << to_json_line(r) << '\n';
  }
  write_text(out_dir / "train_report.txt", table.str());
  write_text(out_dir / "train_report.jsonl", jsonl.str());
  return {report, table.str()};
}

json best_json(const TrainReport& r) {
  json j = json::array();
  for (const auto& b : r.best) {
    j.push_back({{"slot", to_string(b.slot)}, {"epoch", b.epoch}, {"value", b.value}, {"path", b.path.string()}});
  }
  return j;
}

int cmd_train(const TrainOptions& o, const std::vector<std::string>& argv, std::ostream& out) {
  const TrainConfig config = make_train_config(o);
  const DatasetManifest m = DatasetManifest::load(o.data);
  json cfg = train_config_json(config, o.data);
  cfg["argv"] = argv;
  RunLog log(o.out, "train", cfg);
  out << "train " << config.preset << " @" << size_to_string(config.input_size) << ", augment "
      << config.augment.to_string() << ", batch " << config.batch_size << ", "
      << (fp64_enabled() ? "fp64" : "fp32") << "\n";
  const TrainOutcome result = fp64_enabled() ? train_model<double>(m, config, o.out, log, out)
                                             : train_model<float>(m, config, o.out, log, out);
  out << "\n" << result.report_table;
  std::vector<fs::path> artifacts{fs::path(o.out) / "train_report.txt", fs::path(o.out) / "train_report.jsonl"};
  for (const auto& b : result.report.best) artifacts.push_back(b.path);
  json metrics = metrics_json(result.report.final_eval.micro);
  metrics["loss"] = result.report.final_eval.loss;
  metrics["best"] = best_json(result.report);
  log.finish("ok", metrics, artifacts);
  return kExitOk;
}

// ---- eval ----

struct EvalOptions {
  std::string data;
  std::string split = "test";
  std::string checkpoint;
  std::string out;
  double threshold = 0.5;
  std::size_t batch_size = 8;
  double min_dice = -1.0;
};

template <typename T>
EvalResult eval_checkpoint(const Checkpoint& ckpt, const DatasetManifest& m, Split split, const EvalOptions& o) {
  auto model = build_from_checkpoint<T>(ckpt);
  return evaluate_native(*model, m, split, o.batch_size, o.threshold);
}

int cmd_eval(const EvalOptions& o, const std::vector<std::string>& argv, std::ostream& out) {
  const Split split = parse_split(o.split);
  const DatasetManifest m = DatasetManifest::load(o.data);
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  RunLog log;
  if (!o.out.empty()) {
    json cfg{{"data", o.data}, {"split", o.split},       {"checkpoint", o.checkpoint},
             {"threshold", o.threshold}, {"batch_size", o.batch_size}, {"argv", argv}};
    log = RunLog(o.out, "eval", cfg);
  }
  const EvalResult r = fp64_enabled() ? eval_checkpoint<double>(ckpt, m, split, o)
                                      : eval_checkpoint<float>(ckpt, m, split, o);
  const auto rows = eval_records(o.split, ckpt.preset, "-", r);
  const std::vector<EvalRecord> display = labelled(rows);
  const std::string loss_header = o.split == "test" ? "Test Loss" : o.split == "valid" ? "Val Loss" : "Train Loss";
  const std::string table = format_table(display, "Model", loss_header);
  out << table;

  std::vector<fs::path> artifacts;
  if (!o.out.empty()) {
    std::ostringstream jsonl;
    for (const auto& row : rows) jsonl << to_json_line(row) << '\n';
    write_text(fs::path(o.out) / ("eval_" + o.split + ".txt"), table);
    write_text(fs::path(o.out) / ("eval_" + o.split + ".jsonl"), jsonl.str());
    artifacts = {fs::path(o.out) / ("eval_" + o.split + ".txt"), fs::path(o.out) / ("eval_" + o.split + ".jsonl")};
  }
  json metrics = metrics_json(r.micro);
  metrics["loss"] = r.loss;
  metrics["per_image_mean"] = metrics_json(r.per_image_mean);

  if (o.min_dice >= 0.0 && r.micro.dice < o.min_dice) {
    out << "dice " << r.micro.dice << " below required " << o.min_dice << "\n";
    log.finish("metric_failure", metrics, artifacts);
    return kExitFailure;
  }
  log.finish("ok", metrics, artifacts);
  return kExitOk;
}

// ---- predict ----

struct PredictOptions {
  std::string checkpoint;
  std::string image;
  std::string out;
  double threshold = 0.5;
  double blend_alpha = 0.5;
};

template <typename T>
Image predict_image(const Checkpoint& ckpt, const Image& resized, double threshold) {
  auto model = build_from_checkpoint<T>(ckpt);
  const Tensor<T> mask = predict_mask(*model, image_to_tensor<T>(resized), threshold);
  Image out(resized.height, resized.width, 1);
  for (std::size_t i = 0; i < out.pixels.size(); ++i) out.pixels[i] = mask[i] != T{0} ? 1 : 0;
  return out;
}

Image blend_overlay(const Image& image, const Image& mask, double alpha) {
  Image out = image;
  static constexpr std::array<double, 3> kTint{255.0, 0.0, 0.0};
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      if (!mask.at(y, x)) continue;
      for (int c = 0; c < 3; ++c) {
        const double v = (1.0 - alpha) * image.at(y, x, c) + alpha * kTint[c];
        out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

int cmd_predict(const PredictOptions& o, const std::vector<std::string>& argv, std::ostream& out) {
  if (!(o.threshold > 0.0 && o.threshold < 1.0)) throw Error(ErrorCode::kOutOfRange, "--threshold must be in (0, 1)");
  if (!(o.blend_alpha >= 0.0 && o.blend_alpha <= 1.0)) {
    throw Error(ErrorCode::kOutOfRange, "--blend-alpha must be in [0, 1]");
  }
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  const Image input = read_image(o.image, ColorMode::kRgb);
  json cfg{{"checkpoint", o.checkpoint}, {"image", o.image},   {"threshold", o.threshold},
           {"blend_alpha", o.blend_alpha}, {"argv", argv}};
  RunLog log(o.out, "predict", cfg);

  const int h = static_cast<int>(ckpt.input_size.height), w = static_cast<int>(ckpt.input_size.width);
  const Image resized = resize_bilinear(input, h, w);
  const Image mask = fp64_enabled() ? predict_image<double>(ckpt, resized, o.threshold)
                                    : predict_image<float>(ckpt, resized, o.threshold);
  const std::string stem = fs::path(o.image).stem().string();
  const std::string suffix = "-" + std::to_string(h) + "-" + std::to_string(w) + ".png";
  const fs::path mask_path = fs::path(o.out) / (stem + "-mask" + suffix);
  const fs::path blend_path = fs::path(o.out) / (stem + "-blend" + suffix);
  write_mask_png(mask_path, mask);
  write_png(blend_path, blend_overlay(resized, mask, o.blend_alpha));

  std::size_t crack = 0;
  for (auto v : mask.pixels) crack += v;
  out << "mask    " << mask_path.string() << "\noverlay " << blend_path.string() << "\ncrack pixels " << crack << " / "
      << mask.pixels.size() << "\n";
  log.finish("ok", json{{"crack_pixels", crack}, {"pixels", mask.pixels.size()}}, {mask_path, blend_path});
  return kExitOk;
}

// ---- ablate ----

struct AblateOptions {
  TrainOptions train;
  std::string transforms = "all";
};

std::vector<Transform> parse_transform_list(const std::string& text) {
  if (text == "all") return {kAllTransforms.begin(), kAllTransforms.end()};
  std::vector<Transform> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto t = transform_from_name(item);
    if (!t) throw Error(ErrorCode::kInvalidArgument, "unknown transform '" + item + "'");
    if (std::find(out.begin(), out.end(), *t) != out.end()) {
      throw Error(ErrorCode::kInvalidArgument, "transform '" + item + "' listed twice");
    }
    out.push_back(*t);
  }
  if (out.empty()) throw Error(ErrorCode::kInvalidArgument, "--transforms is empty");
  return out;
}

template <typename T>
EvalResult eval_split(const Checkpoint& ckpt, const DatasetManifest& m, Split split, std::size_t batch_size) {
  auto model = build_from_checkpoint<T>(ckpt);
  return evaluate_native(*model, m, split, batch_size);
}

int cmd_ablate(const AblateOptions& o, const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  const std::vector<Transform> transforms = parse_transform_list(o.transforms);
  const TrainConfig base = make_train_config(o.train);
  const DatasetManifest m = DatasetManifest::load(o.train.data);
  json cfg = train_config_json(base, o.train.data);
  cfg["transforms"] = o.transforms;
  cfg["argv"] = argv;
  RunLog log(o.train.out, "ablate", cfg);

  struct Run {
    std::string name;
    AugmentSpec augment;
  };
  std::vector<Run> runs{{"baseline", AugmentSpec::none()}};
  for (Transform t : transforms) runs.push_back({std::string(transform_name(t)), AugmentSpec::single_transform(t, o.train.force_p1)});

  std::vector<EvalRecord> valid_rows, test_rows;
  std::vector<std::string> failed;
  std::vector<fs::path> artifacts;
  const bool fp64 = fp64_enabled();
  for (const Run& run : runs) {
    TrainConfig config = base;
    config.augment = run.augment;
    const fs::path run_dir = fs::path(o.train.out) / "runs" / run.name;
    out << "== " << run.name << " (" << config.augment.to_string() << ")\n";
    try {
      std::error_code ec;
      fs::create_directories(run_dir, ec);
      if (ec) throw Error(ErrorCode::kIoError, run_dir.string() + ": " + ec.message());
      std::ostringstream quiet;
      const TrainOutcome result = fp64 ? train_model<double>(m, config, run_dir, log, quiet)
                                       : train_model<float>(m, config, run_dir, log, quiet);
      const Checkpoint ckpt = load_checkpoint(result.report.best_slot(BestSlot::kLoss).path);
      const EvalResult v = fp64 ? eval_split<double>(ckpt, m, Split::kValid, config.batch_size)
                                : eval_split<float>(ckpt, m, Split::kValid, config.batch_size);
      const EvalResult t = fp64 ? eval_split<double>(ckpt, m, Split::kTest, config.batch_size)
                                : eval_split<float>(ckpt, m, Split::kTest, config.batch_size);
      valid_rows.push_back({"valid", run.name, config.augment.to_string(), v.loss, v.micro});
      test_rows.push_back({"test", run.name, config.augment.to_string(), t.loss, t.micro});
      out << "   epochs " << result.report.epochs.size() << ", valid dice " << v.micro.dice << ", test dice "
          << t.micro.dice << "\n";
      log.write({{"event", "ablation_run"}, {"name", run.name}, {"status", "ok"}, {"valid", metrics_json(v.micro)},
                 {"test", metrics_json(t.micro)}});
    } catch (const Error& e) {
      failed.push_back(run.name);
      err << "ablation run '" << run.name << "' failed: " << e.what() << "\n";
      log.write({{"event", "ablation_run"}, {"name", run.name}, {"status", "failed"}, {"error", e.what()}});
    }
  }

  auto by_dice = [](const EvalRecord& a, const EvalRecord& b) { return a.metrics.dice > b.metrics.dice; };
  std::stable_sort(valid_rows.begin(), valid_rows.end(), by_dice);
  std::stable_sort(test_rows.begin(), test_rows.end(), by_dice);
  const std::string valid_table = format_table(valid_rows, "Transform");
  const std::string test_table = format_table(test_rows, "Transform");
  std::ostringstream jsonl;
  for (const auto& r : valid_rows) jsonl << to_json_line(r) << '\n';
  for (const auto& r : test_rows) jsonl << to_json_line(r) << '\n';
  const fs::path root(o.train.out);
  write_text(root / "ablation_valid.txt", valid_table);
  write_text(root / "ablation_test.txt", test_table);
  write_text(root / "ablation.jsonl", jsonl.str());
  artifacts = {root / "ablation_valid.txt", root / "ablation_test.txt", root / "ablation.jsonl"};

  out << "\nValidation (sorted by Dice)\n" << valid_table << "\nTest (sorted by Dice)\n" << test_table;
  json metrics{{"runs", runs.size()}, {"failed", failed}};
  if (!failed.empty()) {
    out << failed.size() << " of " << runs.size() << " runs failed; tables are partial\n";
    log.finish("partial", metrics, artifacts);
    return kExitFailure;
  }
  log.finish("ok", metrics, artifacts);
  return kExitOk;
}

// ---- gradcheck ----

struct GradcheckOptions {
  std::string preset = "mini";
  std::uint64_t seed = 0;
  double h = 1e-4;
  double tolerance = 1e-4;
};

int cmd_gradcheck(const GradcheckOptions& o, std::ostream& out) {
  if (o.preset != "mini") throw Error(ErrorCode::kInvalidArgument, "gradcheck supports --preset mini only");
  const auto t0 = std::chrono::steady_clock::now();
  const GradcheckReport report = run_gradcheck_suite(o.seed, o.h, o.tolerance);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::size_t width = 2;
  for (const auto& e : report.entries) width = std::max(width, e.name.size());
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %14s  %s\n", static_cast<int>(width), "op", "max rel error", "status");
  out << buf;
  std::vector<std::string> failing;
  for (const auto& e : report.entries) {
    std::snprintf(buf, sizeof buf, "%-*s  %14.3e  %s\n", static_cast<int>(width), e.name.c_str(), e.max_rel_error,
                  e.passed ? "ok" : "FAIL");
    out << buf;
    if (!e.passed) failing.push_back(e.name);
  }
  std::snprintf(buf, sizeof buf, "%zu ops, tolerance %.0e, h %.0e, %.2fs\n", report.entries.size(), o.tolerance, o.h,
                seconds);
  out << buf;
  if (!failing.empty()) {
    out << "FAILED:";
    for (const auto& f : failing) out << ' ' << f;
    out << "\n";
    return kExitFailure;
  }
  out << "all gradients match\n";
  return kExitOk;
}

constexpr const char* kFooter =
    "Environment:\n"
    "  UNSEG_FP64=1   run train/eval/predict/ablate models in 64-bit floating point\n"
    "                 (default 32-bit; gradcheck always uses 64-bit)\n"
    "Exit codes: 0 ok, 1 verification/metric failure, 2 usage error, 3 I/O or dataset error";

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"unseg: U-Net crack segmentation engine", "unseg"};
  app.footer(kFooter);
  app.require_subcommand(1);
  app.set_version_flag("--version", "unseg 0.1.0");

  SynthOptions synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic crack dataset");
  s->add_option("--out", synth.out, "Dataset root to create")->required();
  s->add_option("--n", synth.n, "Number of samples across all splits")->capture_default_str();
  s->add_option("--size", synth.size, "Image size, N or HxW")->capture_default_str();
  s->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
  s->add_option("--cracks-min", synth.cracks_min, "Minimum cracks per image")->capture_default_str();
  s->add_option("--cracks-max", synth.cracks_max, "Maximum cracks per image")->capture_default_str();
  s->add_option("--width-min", synth.width_min, "Minimum crack width in px")->capture_default_str();
  s->add_option("--width-max", synth.width_max, "Maximum crack width in px")->capture_default_str();
  s->add_option("--texture", synth.textures, "Background textures: noise, marble_veins, plain")->delimiter(',');

  auto add_train_options = [](CLI::App* cmd, TrainOptions& t) {
    cmd->add_option("--data", t.data, "Dataset root")->required();
    cmd->add_option("--preset", t.preset, "Encoder preset")->capture_default_str();
    cmd->add_option("--size", t.size, "Model input size, N or HxW (default: preset's)");
    cmd->add_option("--epochs", t.epochs, "Maximum epochs")->capture_default_str();
    cmd->add_option("--bs", t.batch_size, "Batch size (default: preset's)");
    cmd->add_option("--lr", t.lr, "Peak learning rate")->capture_default_str();
    cmd->add_option("--lr-min", t.lr_min, "Final learning rate (default: lr/100)");
    cmd->add_option("--patience", t.patience, "Early-stopping patience in epochs")->capture_default_str();
    cmd->add_option("--seed", t.seed, "Random seed")->capture_default_str();
    cmd->add_option("--out", t.out, "Output directory")->required();
    cmd->add_option("--val-split", t.val_split, "Split used for validation: train, valid or test")
        ->capture_default_str();
    cmd->add_option("--workers", t.workers, "Data loading threads (0 = inline)")->capture_default_str();
    cmd->add_option("--beta1", t.beta1, "Adam beta1")->capture_default_str();
    cmd->add_option("--beta2", t.beta2, "Adam beta2")->capture_default_str();
    cmd->add_option("--eps", t.eps, "Adam epsilon")->capture_default_str();
    cmd->add_option("--weight-decay", t.weight_decay, "Adam L2 weight decay")->capture_default_str();
    cmd->add_flag("--force-p1", t.force_p1, "In single-transform mode, apply the transform to every sample");
  };

  TrainOptions train;
  auto* t = app.add_subcommand("train", "Train a U-Net");
  add_train_options(t, train);
  t->add_option("--augment", train.augment, "none, full or single:<transform>")->capture_default_str();

  EvalOptions eval;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  e->add_option("--data", eval.data, "Dataset root")->required();
  e->add_option("--split", eval.split, "train, valid or test")->capture_default_str();
  e->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  e->add_option("--out", eval.out, "Optional output directory for reports and run.log");
  e->add_option("--threshold", eval.threshold, "Probability threshold")->capture_default_str();
  e->add_option("--bs", eval.batch_size, "Batch size")->capture_default_str();
  e->add_option("--min-dice", eval.min_dice, "Exit 1 if micro Dice falls below this value");

  PredictOptions predict;
  auto* p = app.add_subcommand("predict", "Predict a crack mask and blend overlay for one image");
  p->add_option("--checkpoint", predict.checkpoint, "Checkpoint file")->required();
  p->add_option("--image", predict.image, "Input image")->required();
  p->add_option("--out", predict.out, "Output directory")->required();
  p->add_option("--threshold", predict.threshold, "Probability threshold (inclusive)")->capture_default_str();
  p->add_option("--blend-alpha", predict.blend_alpha, "Red tint opacity on crack pixels")->capture_default_str();

  AblateOptions ablate;
  auto* a = app.add_subcommand("ablate", "Train one model per single augmentation transform plus a baseline");
  add_train_options(a, ablate.train);
  a->add_option("--transforms", ablate.transforms, "all, or a comma-separated list of transform names")
      ->capture_default_str();

  GradcheckOptions grad;
  auto* g = app.add_subcommand("gradcheck", "Compare analytic gradients with central finite differences");
  g->add_option("--preset", grad.preset, "Model family to check end to end")->capture_default_str();
  g->add_option("--seed", grad.seed, "Random seed")->capture_default_str();
  g->add_option("--step", grad.h, "Finite-difference step h")->capture_default_str();
  g->add_option("--tol", grad.tolerance, "Relative error tolerance")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (s->parsed()) return cmd_synth(synth, out);
    if (t->parsed()) return cmd_train(train, args, out);
    if (e->parsed()) return cmd_eval(eval, args, out);
    if (p->parsed()) return cmd_predict(predict, args, out);
    if (a->parsed()) return cmd_ablate(ablate, args, out, err);
    if (g->parsed()) return cmd_gradcheck(grad, out);
  } catch (const Error& ex) {
    err << "error: " << ex.what() << "\n";
    return exit_code_for(ex.code());
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace unseg::cli
