#include <gtest/gtest.h>

#include <json.hpp>
#include <set>
#include <sstream>

#include "temp_dir.hpp"
#include "unseg/cli.hpp"
#include "unseg/training.hpp"

namespace unseg {
namespace {

using nlohmann::json;
using testing::TempDir;

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<json> read_jsonl(const std::filesystem::path& p) {
  std::vector<json> out;
  std::istringstream in(testing::read_text(p));
  for (std::string line; std::getline(in, line);) out.push_back(json::parse(line));
  return out;
}

std::vector<std::string> data_rows(const std::string& table) {
  std::vector<std::string> rows;
  std::istringstream in(table);
  std::string line;
  std::getline(in, line);  // header
  std::getline(in, line);  // rule
  while (std::getline(in, line)) rows.push_back(line);
  return rows;
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("cli");
    const auto r = run({"synth", "--out", data().string(), "--n", "12", "--seed", "0"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() { delete dir_; }
  static std::filesystem::path data() { return dir_->path() / "data"; }
  static std::string at(const std::string& rel) { return (dir_->path() / rel).string(); }

  static TempDir* dir_;
};

TempDir* Cli::dir_ = nullptr;

TEST_F(Cli, HelpDocumentsEnvironmentAndExitCodes) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("UNSEG_FP64"), std::string::npos);
  EXPECT_NE(r.out.find("gradcheck"), std::string::npos);
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"synth", "--out", at("z"), "--n", "0"}).code, 2);
  EXPECT_EQ(run({"train", "--data", data().string(), "--out", at("bad"), "--preset", "vgg16"}).code, 2);
  EXPECT_EQ(run({"train", "--data", data().string(), "--out", at("bad"), "--augment", "single:nope"}).code, 2);
}

TEST_F(Cli, MissingInputsExitThree) {
  EXPECT_EQ(run({"train", "--data", at("nowhere"), "--out", at("o")}).code, 3);
  EXPECT_EQ(run({"eval", "--data", data().string(), "--checkpoint", at("none.unsg")}).code, 3);
}

TEST_F(Cli, SynthIsDeterministicWithDefaultSplits) {
  ASSERT_EQ(run({"synth", "--out", at("s1"), "--seed", "4"}).code, 0);
  ASSERT_EQ(run({"synth", "--out", at("s2"), "--seed", "4"}).code, 0);
  EXPECT_EQ(testing::snapshot_tree(at("s1")), testing::snapshot_tree(at("s2")));
  const auto m = DatasetManifest::load(at("s1"));
  EXPECT_EQ(m.train.size(), 16u);
  EXPECT_EQ(m.valid.size(), 4u);
  EXPECT_EQ(m.test.size(), 4u);
}

TEST_F(Cli, TrainWritesReportsAndRunLog) {
  const auto r = run({"train", "--data", data().string(), "--out", at("t1"), "--epochs", "1", "--augment",
                      "single:transpose"});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::filesystem::path out = at("t1");
  for (const char* f : {"train_report.txt", "train_report.jsonl", "run.log", "checkpoints/best_loss.unsg",
                        "checkpoints/best_dice.unsg", "checkpoints/best_jaccard.unsg"})
    EXPECT_TRUE(std::filesystem::exists(out / f)) << f;
  std::istringstream report(testing::read_text(out / "train_report.txt"));
  std::string header, row, blank;
  std::getline(report, header);
  std::getline(report, row);
  std::getline(report, blank);
  EXPECT_EQ(header.rfind("Epoch", 0), 0u);
  EXPECT_EQ(row.find_first_not_of(' '), row.find('0'));
  EXPECT_TRUE(blank.empty());

  const auto log = read_jsonl(out / "run.log");
  ASSERT_GE(log.size(), 3u);
  EXPECT_EQ(log.front()["event"], "start");
  EXPECT_EQ(log.front()["command"], "train");
  EXPECT_EQ(log.front()["config"]["augment"], "single:transpose");
  EXPECT_EQ(log.back()["event"], "end");
  EXPECT_EQ(log.back()["status"], "ok");
  for (const auto& rec : log) EXPECT_EQ(rec["run_id"], log.front()["run_id"]);
}

TEST_F(Cli, EvalAfterOverfittingMeetsDiceBar) {
  const auto r = run({"train", "--data", data().string(), "--out", at("fit"), "--epochs", "60", "--val-split",
                      "train", "--patience", "60", "--lr", "3e-3"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto e = run({"eval", "--data", data().string(), "--split", "train", "--checkpoint",
                      at("fit/checkpoints/best_loss.unsg"), "--min-dice", "0.8"});
  EXPECT_EQ(e.code, 0) << e.out << e.err;
  EXPECT_NE(e.out.find("Train Loss"), std::string::npos);
  EXPECT_NE(e.out.find("[micro]"), std::string::npos);
  EXPECT_NE(e.out.find("[per_image_mean]"), std::string::npos);
  // An unreachable bar turns into a verification failure.
  EXPECT_EQ(run({"eval", "--data", data().string(), "--split", "train", "--checkpoint",
                 at("fit/checkpoints/best_loss.unsg"), "--min-dice", "1.01"})
                .code,
            1);
}

class CliPredict : public Cli {
 protected:
  void SetUp() override {
    UNetConfig cfg{preset_by_name("resnet-mini")};
    cfg.zero_init_head = true;
    auto model = build_unet<float>(cfg, 0);
    ckpt_ = at("zero.unsg");
    save_checkpoint(ckpt_, make_checkpoint(*model, {}));
    image_ = (data() / "images" / "synth_0000.png").string();
  }
  std::string ckpt_, image_;
};

TEST_F(CliPredict, ZeroLogitsGiveFullRedOverlay) {
  const auto r = run({"predict", "--checkpoint", ckpt_, "--image", image_, "--out", at("p1"), "--blend-alpha", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  const Image blend = read_image(at("p1/synth_0000-blend-64-64.png"), ColorMode::kRgb);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      ASSERT_EQ(blend.at(y, x, 0), 255);
      ASSERT_EQ(blend.at(y, x, 1), 0);
      ASSERT_EQ(blend.at(y, x, 2), 0);
    }
  const Image mask = read_image(at("p1/synth_0000-mask-64-64.png"), ColorMode::kGray);
  for (auto v : mask.pixels) ASSERT_EQ(v, 255);
}

TEST_F(CliPredict, ZeroAlphaLeavesImageUnchanged) {
  ASSERT_EQ(run({"predict", "--checkpoint", ckpt_, "--image", image_, "--out", at("p0"), "--blend-alpha", "0"}).code, 0);
  EXPECT_EQ(read_image(at("p0/synth_0000-blend-64-64.png"), ColorMode::kRgb), read_image(image_, ColorMode::kRgb));
}

TEST_F(CliPredict, HalfAlphaBlendsTowardsRed) {
  ASSERT_EQ(run({"predict", "--checkpoint", ckpt_, "--image", image_, "--out", at("ph")}).code, 0);
  const Image in = read_image(image_, ColorMode::kRgb);
  const Image blend = read_image(at("ph/synth_0000-blend-64-64.png"), ColorMode::kRgb);
  for (std::size_t i = 0; i < in.pixels.size(); ++i) {
    const double tint = i % 3 == 0 ? 255.0 : 0.0;
    ASSERT_EQ(blend.pixels[i], std::lround(0.5 * in.pixels[i] + 0.5 * tint));
  }
}

TEST_F(CliPredict, BadAlphaIsUsageError) {
  EXPECT_EQ(run({"predict", "--checkpoint", ckpt_, "--image", image_, "--out", at("px"), "--blend-alpha", "2"}).code,
            2);
}

TEST_F(Cli, AblateSortsRowsByDice) {
  const auto r = run({"ablate", "--data", data().string(), "--out", at("ab"), "--epochs", "2", "--transforms",
                      "transpose,blur"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"ablation_valid.txt", "ablation_test.txt"}) {
    const std::string table = testing::read_text(std::filesystem::path(at("ab")) / f);
    EXPECT_EQ(table.rfind("Transform", 0), 0u);
    const auto rows = data_rows(table);
    ASSERT_EQ(rows.size(), 3u) << f;
  }
  const auto recs = read_jsonl(std::filesystem::path(at("ab")) / "ablation.jsonl");
  ASSERT_EQ(recs.size(), 6u);
  for (std::size_t i = 1; i < 3; ++i) EXPECT_GE(recs[i - 1]["dice"].get<double>(), recs[i]["dice"].get<double>());
  std::set<std::string> names;
  for (std::size_t i = 0; i < 3; ++i) names.insert(recs[i]["model"].get<std::string>());
  EXPECT_EQ(names, (std::set<std::string>{"baseline", "transpose", "blur"}));
}

TEST_F(Cli, GradcheckPasses) {
  const auto r = run({"gradcheck"});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_NE(r.out.find("conv2d"), std::string::npos);
}

}  // namespace
}  // namespace unseg
