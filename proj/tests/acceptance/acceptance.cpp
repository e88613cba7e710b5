// Acceptance checks A1..A8. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "temp_dir.hpp"
#include "unseg/augment.hpp"
#include "unseg/cli.hpp"
#include "unseg/data.hpp"
#include "unseg/encoders.hpp"
#include "unseg/metrics.hpp"
#include "unseg/training.hpp"

namespace {

using namespace unseg;
namespace fs = std::filesystem;
using unseg::testing::TempDir;

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

struct CliRun {
  int code;
  std::string out;
  std::string err;
  double seconds;
};

CliRun cli_run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const auto t0 = std::chrono::steady_clock::now();
  const int code = cli::run_cli(args, out, err);
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {code, out.str(), err.str(), s};
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// A1: every op's analytic gradient agrees with finite differences.
Outcome a1() {
  Outcome o;
  const auto r = cli_run({"gradcheck", "--preset", "mini", "--seed", "0"});
  o.check(r.code == 0, "gradcheck exit " + std::to_string(r.code) + "\n" + r.out);
  o.check(r.seconds < 300.0, "gradcheck took " + fmt("%.1fs", r.seconds));
  if (o.pass) o.detail = "all ops within 1e-4 in " + fmt("%.2fs", r.seconds);
  return o;
}

// A2: metrics against a set-based oracle on 1000 random 8x8 pairs.
Outcome a2() {
  Outcome o;
  Rng rng(2024);
  std::vector<ConfusionCounts> all;
  double worst_identity = 0;
  for (int i = 0; i < 1000; ++i) {
    Image p(8, 8, 1), g(8, 8, 1);
    const double pp = rng.uniform(), pg = rng.uniform();
    for (auto& v : p.pixels) v = rng.bernoulli(pp) ? 1 : 0;
    for (auto& v : g.pixels) v = rng.bernoulli(pg) ? 1 : 0;
    std::set<int> sp, sg, inter, uni;
    for (int k = 0; k < 64; ++k) {
      if (p.pixels[k]) sp.insert(k);
      if (g.pixels[k]) sg.insert(k);
    }
    std::set_intersection(sp.begin(), sp.end(), sg.begin(), sg.end(), std::inserter(inter, inter.end()));
    std::set_union(sp.begin(), sp.end(), sg.begin(), sg.end(), std::inserter(uni, uni.end()));
    const double od = uni.empty() ? 1.0 : 2.0 * inter.size() / static_cast<double>(sp.size() + sg.size());
    const double oj = uni.empty() ? 1.0 : inter.size() / static_cast<double>(uni.size());
    const auto c = count_pixels(p, g);
    if (dice(c) != od || jaccard(c) != oj) {
      o.check(false, "pair " + std::to_string(i) + " disagrees with oracle");
      break;
    }
    worst_identity = std::max(worst_identity, std::abs(dice(c) - 2 * jaccard(c) / (1 + jaccard(c))));
    all.push_back(c);
  }
  o.check(worst_identity <= 1e-12, "D = 2J/(1+J) off by " + fmt("%.3e", worst_identity));
  double mean_iou = 0;
  for (const auto& c : all) mean_iou += jaccard(c);
  mean_iou /= static_cast<double>(all.size());
  o.check(std::abs(miou(all) - mean_iou) <= 1e-12, "mIoU differs from per-image mean");
  if (o.pass) o.detail = "1000 pairs exact, identity error " + fmt("%.1e", worst_identity);
  return o;
}

// A3: both mini presets overfit the 8 synthetic training images.
Outcome a3(const TempDir& dir) {
  Outcome o;
  const std::string data = (dir / "a3data").string();
  auto s = cli_run({"synth", "--out", data, "--n", "12", "--seed", "0"});
  o.check(s.code == 0, "synth failed: " + s.err);
  if (!o.pass) return o;
  std::string summary;
  for (const std::string preset : {"resnet-mini", "convnext-mini"}) {
    const std::string out = (dir / ("a3-" + preset)).string();
    const auto t = cli_run({"train", "--data", data, "--preset", preset, "--epochs", "200", "--lr", "1e-3", "--seed",
                            "0", "--val-split", "train", "--patience", "200", "--out", out});
    o.check(t.code == 0, preset + " train exit " + std::to_string(t.code) + ": " + t.err);
    o.check(t.seconds < 600.0, preset + " took " + fmt("%.0fs", t.seconds));
    if (t.code != 0) continue;
    const std::string ckpt = out + "/checkpoints/best_loss.unsg";
    const auto e = cli_run({"eval", "--data", data, "--split", "train", "--checkpoint", ckpt, "--min-dice", "0.95"});
    const auto ck = load_checkpoint(ckpt);
    auto model = build_from_checkpoint<float>(ck);
    const auto m = DatasetManifest::load(data);
    const double d = evaluate_native(*model, m, Split::kTrain, 8).micro.dice;
    o.check(e.code == 0 && d >= 0.95, preset + " train Dice " + fmt("%.4f", d) + " < 0.95");
    summary += (summary.empty() ? "" : ", ") + preset + " Dice " + fmt("%.4f", d) + " (" + fmt("%.0fs", t.seconds) + ")";
  }
  if (o.pass) o.detail = summary;
  return o;
}

// A4: preset parameter counts within 2% of the published figures.
Outcome a4() {
  Outcome o;
  const std::vector<std::pair<std::string, double>> expected{
      {"resnet50", 25.6e6}, {"resnet101", 44.5e6}, {"convnextv2-base", 88.7e6}, {"convnextv2-huge", 660e6}};
  std::string summary;
  for (const auto& [name, target] : expected) {
    const auto c = count_encoder_parameters(preset_by_name(name));
    const double n = static_cast<double>(c.with_classifier());
    const double rel = (n - target) / target;
    o.check(std::abs(rel) <= 0.02, name + " " + std::to_string(c.with_classifier()) + " off by " +
                                       fmt("%.2f%%", 100 * rel));
    summary += (summary.empty() ? "" : ", ") + name + " " + fmt("%.2fM", n / 1e6);
  }
  if (o.pass) o.detail = summary;
  return o;
}

Sample random_sample(Rng& rng, int h, int w) {
  Sample s{Image(h, w, 3), Image(h, w, 1), "a5"};
  for (auto& p : s.image.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  // Blobby masks: a few random rectangles.
  const int n = rng.uniform_int(0, 4);
  for (int k = 0; k < n; ++k) {
    const int y0 = rng.uniform_int(0, h - 1), x0 = rng.uniform_int(0, w - 1);
    const int y1 = std::min(h, y0 + rng.uniform_int(1, h / 2)), x1 = std::min(w, x0 + rng.uniform_int(1, w / 2));
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) s.mask.at(y, x) = 1;
  }
  return s;
}

// A5: augmentation invariants and firing rates.
Outcome a5() {
  Outcome o;
  const AugmentParams params;
  Rng rng(5);
  for (Transform t : kAllTransforms) {
    const std::string name(transform_name(t));
    bool binary = true, untouched = true;
    for (int i = 0; i < 1000; ++i) {
      const Sample s = random_sample(rng, 32, 32);
      const Sample r = apply_transform(t, s, params, rng);
      binary = binary && is_binary_mask(r.mask);
      untouched = untouched && (moves_mask(t) || r.mask == s.mask);
    }
    o.check(binary, name + " produced a non-binary mask");
    o.check(untouched, name + " changed the mask");
  }
  bool dice_kept = true;
  for (int i = 0; i < 1000; ++i) {
    const Sample p = random_sample(rng, 16, 24), g = random_sample(rng, 16, 24);
    const double d = dice(count_pixels(p.mask, g.mask));
    const int k = rng.uniform_int(0, 3);
    dice_kept = dice_kept &&
                dice(count_pixels(transform_horizontal_flip(p).mask, transform_horizontal_flip(g).mask)) == d &&
                dice(count_pixels(rotate90(p, k).mask, rotate90(g, k).mask)) == d &&
                dice(count_pixels(transform_transpose(p).mask, transform_transpose(g).mask)) == d;
  }
  o.check(dice_kept, "flip/rot90/transpose changed Dice");

  constexpr int kDraws = 10000;
  std::array<int, 10> hits{};
  const Sample s = random_sample(rng, 16, 16);
  for (int i = 0; i < kDraws; ++i) {
    FiredSet fired{};
    (void)apply_pipeline(s, AugmentSpec::full(), rng, &fired);
    for (std::size_t k = 0; k < 10; ++k) hits[k] += fired[k];
  }
  for (std::size_t k = 0; k < 10; ++k) {
    const double p = default_probability(kAllTransforms[k]);
    const double rate = hits[k] / static_cast<double>(kDraws);
    const double sigma = std::sqrt(p * (1 - p) / kDraws);
    o.check(std::abs(rate - p) <= 3 * sigma,
            std::string(transform_name(kAllTransforms[k])) + " fired at " + fmt("%.4f", rate));
  }
  if (o.pass) o.detail = "10 transforms x 1000 samples, firing rates within 3 sigma";
  return o;
}

// A6: early stopping, cosine schedule, checkpoint round trip, best reload.
Outcome a6(const TempDir& dir) {
  Outcome o;
  EarlyStopping es(2);
  const std::vector<double> losses{1.0, 0.9, 0.95, 0.96};
  std::vector<bool> stops;
  for (double l : losses) stops.push_back(es.update(l));
  o.check(stops == std::vector<bool>{false, false, false, true} && es.best_epoch() == 1u,
          "early stopping sequence wrong");

  o.check(std::abs(cosine_lr(0, 1000, 1e-3, 1e-5) - 1e-3) <= 1e-12 &&
              std::abs(cosine_lr(1000, 1000, 1e-3, 1e-5) - 1e-5) <= 1e-12 &&
              std::abs(cosine_lr(500, 1000, 1e-3, 1e-5) - 5.05e-4) <= 1e-12,
          "cosine endpoints/midpoint");

  SynthSpec spec;
  spec.n_samples = 12;
  const auto m = generate_synthetic(spec, dir / "a6data");
  TrainConfig cfg;
  cfg.epochs_max = 5;
  cfg.patience = 5;
  cfg.checkpoint_dir = dir / "a6ckpt";
  auto model = build_unet<float>(cfg.model_config(), cfg.seed);
  const auto report = fit(*model, m, cfg);

  const auto& best = report.best_slot(BestSlot::kLoss);
  double min_loss = 1e300;
  for (const auto& e : report.epochs) min_loss = std::min(min_loss, e.val_loss);
  const Checkpoint ck = load_checkpoint(best.path);
  o.check(best.value == min_loss && ck.meta.val_loss == min_loss, "best-by-loss slot is not the minimum");
  o.check(make_checkpoint(*model, ck.meta).tensors == ck.tensors, "reloaded weights differ from best checkpoint");
  o.check(std::abs(report.final_eval.loss - min_loss) <= 1e-9, "final eval loss differs from best val loss");

  const auto bytes = serialize_checkpoint(ck);
  const auto again = serialize_checkpoint(deserialize_checkpoint(bytes));
  auto rebuilt = build_from_checkpoint<float>(ck);
  o.check(bytes == again && make_checkpoint(*rebuilt, ck.meta) == ck, "checkpoint round trip not bit-exact");
  if (o.pass) o.detail = "best epoch " + std::to_string(best.epoch) + " of " + std::to_string(report.epochs.size());
  return o;
}

std::vector<std::string> table_rows(const std::string& table, std::string* header) {
  std::istringstream in(table);
  std::string line;
  std::getline(in, *header);
  std::getline(in, line);
  std::vector<std::string> rows;
  while (std::getline(in, line)) rows.push_back(line);
  return rows;
}

// A7: full ablation over every transform on the mini preset.
Outcome a7(const TempDir& dir) {
  Outcome o;
  const std::string data = (dir / "a3data").string();
  const std::string out = (dir / "a7").string();
  const auto r = cli_run({"ablate", "--data", data, "--preset", "resnet-mini", "--transforms", "all", "--out", out});
  o.check(r.code == 0, "ablate exit " + std::to_string(r.code) + ": " + r.err);
  o.check(r.seconds < 7200.0, "ablate took " + fmt("%.0fs", r.seconds));
  if (r.code != 0) return o;
  for (const char* f : {"ablation_valid.txt", "ablation_test.txt"}) {
    std::string header;
    const auto rows = table_rows(unseg::testing::read_text(fs::path(out) / f), &header);
    std::istringstream hs(header);
    std::vector<std::string> cols;
    for (std::string c; hs >> c;) cols.push_back(c);
    o.check(cols == std::vector<std::string>{"Transform", "Loss", "mIoU", "Dice", "Jaccard"},
            std::string(f) + " header '" + header + "'");
    o.check(rows.size() == 11, std::string(f) + " has " + std::to_string(rows.size()) + " rows");
    std::vector<double> dices;
    for (const auto& row : rows) {
      std::istringstream rs(row);
      std::string name;
      double loss, mi, d, j;
      rs >> name >> loss >> mi >> d >> j;
      dices.push_back(d);
    }
    o.check(std::is_sorted(dices.rbegin(), dices.rend()), std::string(f) + " not sorted by Dice");
  }
  if (o.pass) o.detail = "11 runs in " + fmt("%.0fs", r.seconds);
  return o;
}

// A8: identical seeds give byte-identical reports and checkpoints.
Outcome a8(const TempDir& dir) {
  Outcome o;
  const std::string data = (dir / "a3data").string();
  auto train = [&](const std::string& tag) {
    const std::string out = (dir / tag).string();
    return std::make_pair(cli_run({"train", "--data", data, "--epochs", "4", "--augment", "full", "--seed", "7",
                                   "--out", out}),
                          out);
  };
  const auto [r1, o1] = train("a8-train-1");
  const auto [r2, o2] = train("a8-train-2");
  o.check(r1.code == 0 && r2.code == 0, "train failed");
  for (const char* f : {"train_report.txt", "train_report.jsonl", "checkpoints/best_loss.unsg",
                        "checkpoints/best_dice.unsg", "checkpoints/best_jaccard.unsg"}) {
    o.check(unseg::testing::read_bytes(fs::path(o1) / f) == unseg::testing::read_bytes(fs::path(o2) / f),
            std::string("train ") + f + " differs");
  }
  auto ablate = [&](const std::string& tag) {
    const std::string out = (dir / tag).string();
    return std::make_pair(cli_run({"ablate", "--data", data, "--epochs", "3", "--transforms",
                                   "horizontal_flip,elastic,clahe", "--seed", "7", "--out", out}),
                          out);
  };
  const auto [b1, p1] = ablate("a8-ablate-1");
  const auto [b2, p2] = ablate("a8-ablate-2");
  o.check(b1.code == 0 && b2.code == 0, "ablate failed");
  for (const char* f : {"ablation_valid.txt", "ablation_test.txt", "ablation.jsonl",
                        "runs/elastic/checkpoints/best_loss.unsg"}) {
    o.check(unseg::testing::read_bytes(fs::path(p1) / f) == unseg::testing::read_bytes(fs::path(p2) / f),
            std::string("ablate ") + f + " differs");
  }
  if (o.pass) o.detail = "train and ablate outputs byte-identical";
  return o;
}

}  // namespace

int main() {
  TempDir dir("acceptance");
  const std::vector<std::pair<std::string, std::function<Outcome()>>> checks{
      {"A1", a1},
      {"A2", a2},
      {"A3", [&] { return a3(dir); }},
      {"A4", a4},
      {"A5", a5},
      {"A6", [&] { return a6(dir); }},
      {"A7", [&] { return a7(dir); }},
      {"A8", [&] { return a8(dir); }},
  };
  int failures = 0;
  for (const auto& [id, fn] : checks) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failures += o.pass ? 0 : 1;
    std::cout << id << (o.pass ? " PASS " : " FAIL ") << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
