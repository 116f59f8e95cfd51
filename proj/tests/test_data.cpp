#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <set>

#include "drgaze/data.hpp"
#include "drgaze/errors.hpp"
#include "drgaze/tensor_io.hpp"
#include "support.hpp"

using namespace drgaze;
using testing_support::random_tensor;
using testing_support::ScratchDir;

namespace {

SampleRecord record(const std::string& driver, double gx, double gy, std::uint64_t seed = 0) {
  SampleRecord r;
  r.driver_id = driver;
  r.eye_image = "eyes/" + driver + ".drgz";
  Rng rng(seed);
  for (auto& v : r.features.values) v = rng.uniform(-500, 500);
  r.gaze_x = gx;
  r.gaze_y = gy;
  return r;
}

std::vector<SampleRecord> records_for(std::size_t drivers, std::size_t per_driver) {
  std::vector<SampleRecord> out;
  for (std::size_t d = 0; d < drivers; ++d) {
    for (std::size_t s = 0; s < per_driver; ++s) {
      out.push_back(record("d" + std::to_string(d), 10.0 * static_cast<double>(s), 5.0, d * 100 + s));
    }
  }
  return out;
}

std::string manifest_line(const std::string& gaze_x) {
  std::string line = "drv\teye.drgz";
  for (int i = 0; i < 13; ++i) line += "\t" + std::to_string(i);
  return line + "\t" + gaze_x + "\t10\n";
}

std::set<std::string> drivers_of(const std::vector<SampleRecord>& rs) {
  std::set<std::string> out;
  for (const auto& r : rs) out.insert(r.driver_id);
  return out;
}

}  // namespace

TEST(Manifest, EmptyFileGivesNoRecords) {
  ScratchDir dir("manifest");
  std::ofstream(dir / "m.tsv").close();
  EXPECT_TRUE(load_manifest(dir / "m.tsv").empty());
}

TEST(Manifest, RoundTripKeepsOrderAndExactValues) {
  ScratchDir dir("manifest");
  auto rs = records_for(1, 3);
  rs[1].road_image = "road/0001.ppm";
  rs[2].gaze_x = 0.1 + 0.2;  // not representable in short decimal
  write_manifest(dir / "m.tsv", rs);
  const auto back = load_manifest(dir / "m.tsv");
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back, rs);
}

TEST(Manifest, OutOfFrameGazeNamesLine) {
  ScratchDir dir("manifest");
  {
    std::ofstream os(dir / "m.tsv");
    os << manifest_line("100") << manifest_line("2000");
  }
  try {
    (void)load_manifest(dir / "m.tsv");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("m.tsv:2"), std::string::npos) << e.what();
  }
}

TEST(Manifest, MalformedLineNamesLine) {
  ScratchDir dir("manifest");
  {
    std::ofstream os(dir / "m.tsv");
    os << manifest_line("1") << manifest_line("1") << "drv\teye\t1\t2\n";
  }
  try {
    (void)load_manifest(dir / "m.tsv");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("m.tsv:3"), std::string::npos) << e.what();
  }
  {
    std::ofstream os(dir / "bad.tsv");
    os << manifest_line("abc");
  }
  EXPECT_THROW((void)load_manifest(dir / "bad.tsv"), FormatError);
}

TEST(Manifest, ResolvesRelativeReferences) {
  EXPECT_EQ(resolve_reference("/data/set/manifest.tsv", "eyes/a.drgz"), std::filesystem::path("/data/set/eyes/a.drgz"));
  EXPECT_EQ(resolve_reference("/data/set/manifest.tsv", "/abs/a.drgz"), std::filesystem::path("/abs/a.drgz"));
}

TEST(RealFormat, ShortestRoundTrip) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.uniform(-1e6, 1e6) * std::pow(10.0, rng.uniform(-8, 8));
    EXPECT_EQ(parse_real(format_real(v)), v);
  }
  EXPECT_EQ(format_real(0.5), "0.5");
  EXPECT_THROW((void)parse_real("1.5x"), FormatError);
}

TEST(Normalization, PooledIdentityPerDriver) {
  Rng rng(2);
  std::vector<std::string> drivers;
  std::vector<Tensor<double>> images;
  for (int d = 0; d < 3; ++d) {
    for (int i = 0; i < 4; ++i) {
      drivers.push_back("drv" + std::to_string(d));
      images.push_back(random_tensor<double>({3, 6, 5}, rng, 20.0 * d, 100.0 + 50.0 * d));
    }
  }
  const auto stats = compute_normalization<double>(drivers, images);
  for (std::size_t i = 0; i < images.size(); ++i) normalize_image(images[i], stats.at(drivers[i]));

  for (int d = 0; d < 3; ++d) {
    for (std::size_t c = 0; c < 3; ++c) {
      double sum = 0, sq = 0;
      std::size_t n = 0;
      for (std::size_t i = 0; i < images.size(); ++i) {
        if (drivers[i] != "drv" + std::to_string(d)) continue;
        for (std::size_t k = 0; k < 30; ++k) {
          const double v = images[i][c * 30 + k];
          sum += v;
          sq += v * v;
          ++n;
        }
      }
      const double mean = sum / static_cast<double>(n);
      const double sd = std::sqrt(sq / static_cast<double>(n) - mean * mean);
      EXPECT_LT(std::abs(mean), 1e-5);
      EXPECT_LT(std::abs(sd - 1.0), 1e-4);
    }
  }
}

TEST(Normalization, DriversWithDifferentBrightnessGetDifferentMeans) {
  Rng rng(3);
  const std::vector<std::string> drivers{"dark", "bright"};
  const std::vector<Tensor<float>> images{random_tensor<float>({3, 4, 4}, rng, 0, 50),
                                          random_tensor<float>({3, 4, 4}, rng, 150, 250)};
  const auto stats = compute_normalization<float>(drivers, images);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_LT(stats.at("dark").mean[c], stats.at("bright").mean[c]);
}

TEST(Normalization, ConstantImageIsRejectedNamingDriverAndChannel) {
  const std::vector<std::string> drivers{"flat"};
  const std::vector<Tensor<float>> images{Tensor<float>::full({3, 4, 4}, 7.0f)};
  try {
    (void)compute_normalization<float>(drivers, images);
    FAIL() << "expected rejection";
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("flat"), std::string::npos) << msg;
    EXPECT_NE(msg.find("channel 0"), std::string::npos) << msg;
  }
}

TEST(Normalization, DenormalizeRecoversOriginal) {
  Rng rng(4);
  const auto original = random_tensor<double>({3, 8, 12}, rng, 10, 240);
  const auto stats = image_stats(original);
  Tensor<double> x = original;
  normalize_image(x, stats);
  denormalize_image(x, stats);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    EXPECT_LE(std::abs(x[i] - original[i]), 1e-6 * std::abs(original[i]));
  }
}

TEST(Normalization, StatsFileRoundTrip) {
  ScratchDir dir("stats");
  NormalizationStats s;
  s.drivers["a"] = {{1.5, 2.25, 3.0}, {0.1, 0.2, 0.3}};
  s.drivers["b"] = {{100.0 / 3, 0, -1}, {1, 2, 3}};
  write_stats(dir / "s.tsv", s);
  EXPECT_EQ(read_stats(dir / "s.tsv"), s);
}

TEST(Split, ThirteenDriversGiveElevenOneOne) {
  const auto rs = records_for(13, 5);
  const auto split = split_by_driver(rs, 1, 1, 7);
  const auto tr = drivers_of(split.train), va = drivers_of(split.validation), te = drivers_of(split.test);
  EXPECT_EQ(tr.size(), 11u);
  EXPECT_EQ(va.size(), 1u);
  EXPECT_EQ(te.size(), 1u);
  for (const auto& d : va) EXPECT_FALSE(tr.count(d) || te.count(d));
  for (const auto& d : te) EXPECT_FALSE(tr.count(d));
  EXPECT_EQ(split.train.size() + split.validation.size() + split.test.size(), rs.size());
}

TEST(Split, MinimumAndErrors) {
  const auto split = split_by_driver(records_for(3, 2), 1, 1, 0);
  EXPECT_EQ(drivers_of(split.train).size(), 1u);
  EXPECT_EQ(drivers_of(split.validation).size(), 1u);
  EXPECT_EQ(drivers_of(split.test).size(), 1u);
  EXPECT_THROW((void)split_by_driver(records_for(2, 2), 1, 1, 0), std::invalid_argument);
}

TEST(Split, DeterministicAndPartitioning) {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t drivers = 3 + rng.below(10);
    const auto rs = records_for(drivers, 1 + rng.below(4));
    const std::uint64_t seed = rng.next();
    const auto a = split_by_driver(rs, 1, 1, seed);
    const auto b = split_by_driver(rs, 1, 1, seed);
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.validation, b.validation);
    EXPECT_EQ(a.test, b.test);
    // each record lands in exactly one partition
    std::multiset<std::string> seen;
    for (const auto* part : {&a.train, &a.validation, &a.test})
      for (const auto& r : *part) seen.insert(r.driver_id + "/" + format_real(r.gaze_x));
    EXPECT_EQ(seen.size(), rs.size());
    for (const auto& key : seen) EXPECT_EQ(seen.count(key), 1u);
  }
}

TEST(Synthesis, CountsAndDriverIds) {
  ScratchDir dir("synth");
  SynthesisOptions opt;
  const auto rep = synthesize_dataset(dir.path(), opt);
  EXPECT_EQ(rep.records.size(), 260u);
  EXPECT_EQ(distinct_drivers(rep.records).size(), 13u);
  EXPECT_EQ(load_manifest(rep.manifest), rep.records);
  for (const auto& r : rep.records) {
    EXPECT_GE(r.gaze_x, 0);
    EXPECT_LT(r.gaze_x, 1920);
    EXPECT_GE(r.gaze_y, 0);
    EXPECT_LT(r.gaze_y, 1080);
  }
  EXPECT_EQ(load_tensor<float>(resolve_reference(rep.manifest, rep.records[0].eye_image)).shape(), (Shape{3, 36, 60}));
}

TEST(Synthesis, PlantedMapIsRecoverableByLeastSquares) {
  ScratchDir dir("synth-ols");
  const auto rep = synthesize_dataset(dir.path(), {});
  EXPECT_LT(rep.ols_l1, 1.0);

  // Independent check: normal equations solved with a plain LDLT.
  const std::size_t n = rep.records.size();
  Eigen::MatrixXd a(static_cast<Eigen::Index>(n), 14);
  Eigen::MatrixXd y(static_cast<Eigen::Index>(n), 2);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    for (int j = 0; j < 13; ++j) a(row, j) = rep.records[i].features.values[static_cast<std::size_t>(j)];
    a(row, 13) = 1.0;
    y(row, 0) = rep.records[i].gaze_x;
    y(row, 1) = rep.records[i].gaze_y;
  }
  const Eigen::MatrixXd coef = (a.transpose() * a).ldlt().solve(a.transpose() * y);
  const double l1 = (a * coef - y).cwiseAbs().mean();
  EXPECT_LT(l1, 1.0);
}

TEST(Synthesis, SameSeedGivesIdenticalFiles) {
  ScratchDir a("synth-a"), b("synth-b");
  SynthesisOptions opt;
  opt.drivers = 3;
  opt.samples_per_driver = 4;
  opt.seed = 9;
  synthesize_dataset(a.path(), opt);
  synthesize_dataset(b.path(), opt);
  const auto slurp = [](const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), {});
  };
  EXPECT_EQ(slurp(a / "manifest.tsv"), slurp(b / "manifest.tsv"));
  for (const auto& entry : std::filesystem::directory_iterator(a / "eyes")) {
    EXPECT_EQ(slurp(entry.path()), slurp(b.path() / "eyes" / entry.path().filename()));
  }
}

TEST(Batching, StacksSamplesInIndexOrder) {
  Dataset<float> d;
  for (int i = 0; i < 3; ++i) {
    d.drivers.push_back("x");
    d.eyes.push_back(Tensor<float>::full({1, 2, 2}, static_cast<float>(i)));
    FeatureVector f;
    f.values.fill(i);
    d.features.push_back(f);
    d.gaze.push_back({static_cast<double>(i), 2.0 * i});
  }
  const std::vector<std::size_t> idx{2, 0};
  const auto b = make_batch(d, std::span<const std::size_t>(idx));
  EXPECT_EQ(b.eyes.shape(), (Shape{2, 1, 2, 2}));
  EXPECT_EQ(b.eyes[0], 2.0f);
  EXPECT_EQ(b.eyes[4], 0.0f);
  EXPECT_EQ(b.features.shape(), (Shape{2, 13}));
  EXPECT_EQ(b.gaze.values(), (std::vector<float>{2, 4, 0, 0}));
}
