#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "drgaze/checkpoint.hpp"
#include "drgaze/cli.hpp"
#include "drgaze/errors.hpp"
#include "drgaze/tensor_io.hpp"
#include "support.hpp"

using namespace drgaze;
using testing_support::ScratchDir;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

CliResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "drgaze");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliResult r;
  r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

CliResult run_binary(const std::string& command) {
  CliResult r;
  FILE* pipe = ::popen((command + " 2>&1").c_str(), "r");
  if (!pipe) return r;
  char buf[512];
  while (std::fgets(buf, sizeof(buf), pipe)) r.out += buf;
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) out.push_back(line);
  return out;
}

std::filesystem::path write_tiny_config(const ScratchDir& dir) {
  const auto path = dir / "tiny.cfg";
  std::ofstream os(path);
  os << "# tiny eye branch\n"
        "features = 4\nblocks = 2\ngrowth = 2\nlayers = 2\n"
        "height = 8\nwidth = 12\nhidden = 32\n"
        "epochs = 5\nbatch_size = 8\nlr = 1e-3\nseed = 3\n";
  return path;
}

std::filesystem::path synth(const ScratchDir& dir, std::size_t drivers = 4, std::size_t samples = 8) {
  SynthesisOptions o;
  o.drivers = drivers;
  o.samples_per_driver = samples;
  o.height = 8;
  o.width = 12;
  return synthesize_dataset(dir / "data", o).manifest;
}

// Zero-weight tiny model whose head always outputs (x, y).
std::filesystem::path constant_checkpoint(const ScratchDir& dir, double x, double y) {
  auto m = make_model<float>(ModelConfig::tiny());
  m.head.output.bias = Tensor<float>::vector({static_cast<float>(x), static_cast<float>(y)});
  const auto path = dir / "constant.ckpt";
  save_checkpoint(path, m);
  return path;
}

}  // namespace

TEST(CliTrain, WritesCheckpointsAndOneMetricLinePerEpoch) {
  ScratchDir dir("cli-train");
  const auto manifest = synth(dir);
  const auto r = run_cli({"train", "--config", write_tiny_config(dir).string(), "--manifest", manifest.string(),
                          "--out", (dir / "run").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto metrics = lines_of(slurp(dir / "run" / "metrics.csv"));
  ASSERT_EQ(metrics.size(), 6u);
  EXPECT_EQ(metrics[0], "epoch,lr,train_l1,val_l1");
  EXPECT_EQ(metrics[1].substr(0, 8), "0,0.001,");
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / "final.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / "best.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / "norm_stats.tsv"));
  // metric lines are echoed to stdout as well
  EXPECT_NE(r.out.find(metrics[5]), std::string::npos);
}

TEST(CliTrain, MissingManifestIsUsageError) {
  ScratchDir dir("cli-missing");
  const auto r = run_cli({"train", "--manifest", (dir / "nope.tsv").string(), "--out", (dir / "run").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("manifest"), std::string::npos);
}

TEST(CliTrain, ConfigErrorsAreUsageErrors) {
  ScratchDir dir("cli-config");
  {
    std::ofstream os(dir / "bad.cfg");
    os << "epochs = 2\nwarp_factor = 9\n";
  }
  EXPECT_EQ(run_cli({"train", "--config", (dir / "bad.cfg").string()}).code, 2);
  EXPECT_EQ(run_cli({"train", "--epochs", "many"}).code, 2);
  EXPECT_EQ(run_cli({"train", "--no-such-flag"}).code, 2);
  EXPECT_EQ(run_cli({"train", "--precision", "f16"}).code, 2);
  EXPECT_EQ(run_cli({}).code, 2);
}

TEST(CliTrain, SameSeedGivesByteIdenticalArtifacts) {
  ScratchDir dir("cli-det");
  const auto manifest = synth(dir);
  const auto cfg = write_tiny_config(dir);
  for (const char* run : {"a", "b"}) {
    ASSERT_EQ(run_cli({"train", "--config", cfg.string(), "--manifest", manifest.string(), "--out", (dir / run).string()})
                  .code,
              0);
  }
  for (const char* file : {"final.ckpt", "best.ckpt", "metrics.csv", "norm_stats.tsv"}) {
    EXPECT_EQ(slurp(dir / "a" / file), slurp(dir / "b" / file)) << file;
  }
}

TEST(CliTrain, DataDirEnvironmentSuppliesManifest) {
  ScratchDir dir("cli-env");
  synth(dir);
  ::setenv("DRGAZE_DATA_DIR", (dir / "data").c_str(), 1);
  const auto r = run_cli({"train", "--config", write_tiny_config(dir).string(), "--epochs", "1", "--out",
                          (dir / "run").string()});
  ::unsetenv("DRGAZE_DATA_DIR");
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(lines_of(slurp(dir / "run" / "metrics.csv")).size(), 2u);
}

TEST(CliTrain, FlagsOverrideConfigFile) {
  ScratchDir dir("cli-override");
  const auto manifest = synth(dir);
  const auto r = run_cli({"train", "--config", write_tiny_config(dir).string(), "--epochs", "2", "--manifest",
                          manifest.string(), "--out", (dir / "run").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(lines_of(slurp(dir / "run" / "metrics.csv")).size(), 3u);
}

TEST(CliTrain, NonFiniteLossExitsThree) {
  ScratchDir dir("cli-nan");
  const auto manifest = synth(dir);
  // A huge learning rate drives the parameters to overflow.
  const auto r = run_cli({"train", "--config", write_tiny_config(dir).string(), "--lr", "1e30", "--epochs", "50",
                          "--manifest", manifest.string(), "--out", (dir / "run").string()});
  EXPECT_EQ(r.code, 3) << r.err;
  EXPECT_NE(r.err.find("non-finite"), std::string::npos) << r.err;
}

TEST(CliEval, ReproducesFinalEpochValidationLoss) {
  ScratchDir dir("cli-eval");
  const auto manifest = synth(dir);
  ASSERT_EQ(run_cli({"train", "--config", write_tiny_config(dir).string(), "--manifest", manifest.string(), "--out",
                     (dir / "run").string()})
                .code,
            0);
  const auto last = lines_of(slurp(dir / "run" / "metrics.csv")).back();
  const std::string val = last.substr(last.rfind(',') + 1);

  const auto r = run_cli({"eval", "--checkpoint", (dir / "run" / "final.ckpt").string(), "--manifest", manifest.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines_of(r.out);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_NE(rows[0].find("Train error"), std::string::npos);
  EXPECT_NE(rows[0].find("Val. error"), std::string::npos);
  EXPECT_NE(rows[0].find("Test error"), std::string::npos);
  std::istringstream row(rows[1]);
  std::string method, train, v, test;
  row >> method >> train >> v >> test;
  EXPECT_EQ(method, "DR-Gaze");
  EXPECT_EQ(v, val);
}

TEST(CliEval, PerfectPredictionFixtureReportsZero) {
  ScratchDir dir("cli-perfect");
  SynthesisOptions o;
  o.drivers = 3;
  o.samples_per_driver = 4;
  o.height = 8;
  o.width = 12;
  auto rep = synthesize_dataset(dir / "data", o);
  for (auto& rec : rep.records) {
    rec.gaze_x = 960;
    rec.gaze_y = 540;
  }
  write_manifest(rep.manifest, rep.records);
  const auto r = run_cli({"eval", "--checkpoint", constant_checkpoint(dir, 960, 540).string(), "--manifest",
                          rep.manifest.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream row(lines_of(r.out).at(1));
  std::string method, train, val, test;
  row >> method >> train >> val >> test;
  EXPECT_EQ(train, "0");
  EXPECT_EQ(val, "0");
  EXPECT_EQ(test, "0");
}

TEST(CliEval, ConfigCheckpointMismatchIsUsageError) {
  ScratchDir dir("cli-mismatch");
  const auto manifest = synth(dir);
  const auto ckpt = constant_checkpoint(dir, 1, 1);
  EXPECT_EQ(run_cli({"eval", "--checkpoint", ckpt.string(), "--manifest", manifest.string(), "--blocks", "3"}).code, 2);
  EXPECT_EQ(run_cli({"eval", "--checkpoint", (dir / "missing.ckpt").string(), "--manifest", manifest.string()}).code, 2);

  // eye tensors that do not fit the checkpoint's input shape
  SynthesisOptions o;
  o.drivers = 3;
  o.samples_per_driver = 2;
  const auto big = synthesize_dataset(dir / "big", o).manifest;
  EXPECT_EQ(run_cli({"eval", "--checkpoint", ckpt.string(), "--manifest", big.string()}).code, 2);
}

namespace {

struct PredictFixture {
  ScratchDir dir{"cli-predict"};
  std::filesystem::path eye;
  std::filesystem::path road;
  std::string features;

  PredictFixture() {
    Rng rng(1);
    Tensor<float> e({3, 8, 12});
    for (auto& v : e.data()) v = static_cast<float>(rng.uniform(0, 255));
    eye = dir / "eye.drgz";
    save_tensor(eye, e);
    cli::Image img{192, 108, std::vector<unsigned char>(192 * 108 * 3, 40)};
    road = dir / "road.ppm";
    cli::write_ppm(road, img);
    for (int i = 0; i < 13; ++i) features += (i ? "," : "") + std::to_string(i * 10);
  }
};

std::array<unsigned char, 3> pixel(const cli::Image& img, std::size_t x, std::size_t y) {
  const auto* p = &img.rgb[(y * img.width + x) * 3];
  return {p[0], p[1], p[2]};
}

}  // namespace

TEST(CliPredict, CenterMarker) {
  PredictFixture f;
  const auto out = f.dir / "overlay.ppm";
  const auto r = run_cli({"predict", "--checkpoint", constant_checkpoint(f.dir, 960, 540).string(), "--eye", f.eye.string(),
                          "--feature-values", f.features, "--road", f.road.string(), "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("prediction 960 540"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("marker 960 540"), std::string::npos) << r.out;
  EXPECT_TRUE(r.err.empty()) << r.err;

  const auto img = cli::read_ppm(out);
  EXPECT_EQ(img.width, 192u);
  EXPECT_EQ(img.height, 108u);
  EXPECT_EQ(pixel(img, 96, 54), (std::array<unsigned char, 3>{255, 0, 0}));
  EXPECT_EQ(pixel(img, 0, 0), (std::array<unsigned char, 3>{40, 40, 40}));
}

TEST(CliPredict, OutOfFrameIsClampedWithWarning) {
  PredictFixture f;
  const auto out = f.dir / "overlay.ppm";
  const auto r = run_cli({"predict", "--checkpoint", constant_checkpoint(f.dir, -5, 50).string(), "--eye", f.eye.string(),
                          "--feature-values", f.features, "--road", f.road.string(), "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("prediction -5 50"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("marker 0 50"), std::string::npos) << r.out;
  EXPECT_NE(r.err.find("warning"), std::string::npos);
  const auto img = cli::read_ppm(out);
  EXPECT_EQ(pixel(img, 0, 5), (std::array<unsigned char, 3>{255, 0, 0}));
}

TEST(CliPredict, TruthDrawnGreenAndOverlayDeterministic) {
  PredictFixture f;
  const auto ckpt = constant_checkpoint(f.dir, 200, 200);
  for (const char* name : {"a.ppm", "b.ppm"}) {
    ASSERT_EQ(run_cli({"predict", "--checkpoint", ckpt.string(), "--eye", f.eye.string(), "--feature-values", f.features,
                       "--road", f.road.string(), "--truth", "1500,800", "--out", (f.dir / name).string()})
                  .code,
              0);
  }
  EXPECT_EQ(slurp(f.dir / "a.ppm"), slurp(f.dir / "b.ppm"));
  const auto img = cli::read_ppm(f.dir / "a.ppm");
  EXPECT_EQ(pixel(img, 150, 80), (std::array<unsigned char, 3>{0, 255, 0}));
  EXPECT_EQ(pixel(img, 20, 20), (std::array<unsigned char, 3>{255, 0, 0}));
}

TEST(CliPredict, RoadImageAsTensor) {
  PredictFixture f;
  save_tensor(f.dir / "road.drgz", Tensor<float>::full({3, 54, 96}, 100.0f));
  const auto out = f.dir / "overlay.ppm";
  ASSERT_EQ(run_cli({"predict", "--checkpoint", constant_checkpoint(f.dir, 960, 540).string(), "--eye", f.eye.string(),
                     "--feature-values", f.features, "--road", (f.dir / "road.drgz").string(), "--out", out.string()})
                .code,
            0);
  const auto img = cli::read_ppm(out);
  EXPECT_EQ(img.width, 96u);
  EXPECT_EQ(img.height, 54u);
}

TEST(CliPredict, RejectsWrongFeatureCount) {
  PredictFixture f;
  EXPECT_EQ(run_cli({"predict", "--checkpoint", constant_checkpoint(f.dir, 1, 1).string(), "--eye", f.eye.string(),
                     "--feature-values", "1,2,3"})
                .code,
            2);
}

TEST(Overlay, MarkerRadiusScalesWithWidth) {
  EXPECT_EQ(cli::marker_radius(cli::Image{1920, 1080, {}}), 12.0);
  EXPECT_EQ(cli::marker_radius(cli::Image{960, 540, {}}), 6.0);
  cli::Image img{40, 40, std::vector<unsigned char>(40 * 40 * 3, 0)};
  cli::draw_disc(img, 20, 20, 12, 255, 0, 0);
  EXPECT_EQ(img.rgb[(20 * 40 + 32) * 3], 255);
  EXPECT_EQ(img.rgb[(20 * 40 + 33) * 3], 0);
}

TEST(CliGradcheck, DefaultTolerancePasses) {
  const auto r = run_cli({"gradcheck"});
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("PASS"), std::string::npos);
}

TEST(CliGradcheck, TinyToleranceFails) {
  const auto r = run_cli({"gradcheck", "--tolerance", "1e-12"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("FAIL"), std::string::npos);
}

TEST(CliGradcheck, CorruptedBuildFailsNamingTensor) {
  const auto r = run_binary(std::string(DRGAZE_FAULTY_BINARY) + " gradcheck");
  EXPECT_EQ(r.code, 1) << r.out;
  EXPECT_NE(r.out.find(".bias"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("gradient mismatch in eye."), std::string::npos) << r.out;
}

TEST(RunConfig, DefaultsAndRoundTrip) {
  cli::RunConfig c;
  EXPECT_EQ(c.get("lr"), "1e-05");
  EXPECT_EQ(c.get("batch_size"), "32");
  EXPECT_EQ(c.get("milestones"), "40,55");
  EXPECT_EQ(c.get("gamma"), "0.1");
  EXPECT_EQ(c.get("blocks"), "32");
  EXPECT_EQ(c.get("precision"), "f32");
  for (const auto& key : cli::RunConfig::keys()) {
    cli::RunConfig d;
    d.set(key, c.get(key));
    EXPECT_EQ(d.get(key), c.get(key)) << key;
  }
  EXPECT_THROW(c.set("nope", "1"), ConfigError);
  c.set("milestones", "");
  EXPECT_TRUE(c.train.schedule.milestones.empty());
}
