#include "drgaze/data.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "drgaze/errors.hpp"
#include "drgaze/rng.hpp"
#include "drgaze/tensor_io.hpp"

namespace drgaze {

namespace fs = std::filesystem;

std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw FormatError("cannot format real");
  return std::string(buf, ptr);
}

double parse_real(std::string_view text) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw FormatError("not a real number: '" + std::string(text) + "'");
  }
  if (!std::isfinite(v)) throw FormatError("non-finite value: '" + std::string(text) + "'");
  return v;
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = line.find('\t', start);
    fields.push_back(line.substr(start, end - start));
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return fields;
}

constexpr std::size_t kRequiredFields = 2 + kFeatureVectorLength + 2;

}  // namespace

std::vector<SampleRecord> load_manifest(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open manifest " + path.string());
  std::vector<SampleRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto where = [&] { return path.string() + ":" + std::to_string(line_no) + ": "; };
    const auto fields = split_tabs(line);
    if (fields.size() != kRequiredFields && fields.size() != kRequiredFields + 1) {
      throw FormatError(where() + "expected " + std::to_string(kRequiredFields) + " or " +
                        std::to_string(kRequiredFields + 1) + " tab-separated fields, got " +
                        std::to_string(fields.size()));
    }
    SampleRecord r;
    r.driver_id = fields[0];
    r.eye_image = fields[1];
    if (r.driver_id.empty() || r.eye_image.empty()) throw FormatError(where() + "empty driver or eye path");
    try {
      for (std::size_t i = 0; i < kFeatureVectorLength; ++i) r.features.values[i] = parse_real(fields[2 + i]);
      r.gaze_x = parse_real(fields[2 + kFeatureVectorLength]);
      r.gaze_y = parse_real(fields[3 + kFeatureVectorLength]);
    } catch (const FormatError& e) {
      throw FormatError(where() + e.what());
    }
    if (!(r.gaze_x >= 0 && r.gaze_x < kFrameWidth && r.gaze_y >= 0 && r.gaze_y < kFrameHeight)) {
      throw FormatError(where() + "gaze (" + format_real(r.gaze_x) + ", " + format_real(r.gaze_y) +
                        ") outside the 1920x1080 frame");
    }
    if (fields.size() == kRequiredFields + 1 && !fields.back().empty()) r.road_image = fields.back();
    records.push_back(std::move(r));
  }
  return records;
}

void write_manifest(const fs::path& path, std::span<const SampleRecord> records) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FormatError("cannot write manifest " + path.string());
  for (const auto& r : records) {
    os << r.driver_id << '\t' << r.eye_image;
    for (double f : r.features.values) os << '\t' << format_real(f);
    os << '\t' << format_real(r.gaze_x) << '\t' << format_real(r.gaze_y);
    if (r.road_image) os << '\t' << *r.road_image;
    os << '\n';
  }
  if (!os) throw FormatError("write failed for " + path.string());
}

fs::path resolve_reference(const fs::path& manifest, const std::string& reference) {
  fs::path p(reference);
  if (p.is_absolute()) return p;
  return manifest.parent_path() / p;
}

const ChannelStats& NormalizationStats::at(const std::string& driver) const {
  auto it = drivers.find(driver);
  if (it == drivers.end()) throw std::out_of_range("no normalization stats for driver '" + driver + "'");
  return it->second;
}

template <Real T>
NormalizationStats compute_normalization(std::span<const std::string> drivers,
                                         std::span<const Tensor<T>> images) {
  if (drivers.size() != images.size()) {
    throw std::invalid_argument("compute_normalization: driver and image counts differ");
  }
  struct Accum {
    std::vector<double> sum;
    std::vector<double> sq;
    std::vector<std::size_t> count;
  };
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < drivers.size(); ++i) members[drivers[i]].push_back(i);

  NormalizationStats stats;
  for (const auto& [driver, idx] : members) {
    const std::size_t channels = images[idx.front()].shape().at(0);
    ChannelStats cs;
    cs.mean.assign(channels, 0.0);
    cs.stddev.assign(channels, 0.0);
    std::vector<std::size_t> count(channels, 0);
    for (auto i : idx) {
      const auto& img = images[i];
      if (img.rank() != 3 || img.shape()[0] != channels) {
        throw ShapeError("driver " + driver + ": eye image shape " + shape_string(img.shape()) +
                         " is not [" + std::to_string(channels) + ",H,W]");
      }
      const std::size_t plane = img.shape()[1] * img.shape()[2];
      for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t k = 0; k < plane; ++k) cs.mean[c] += img[c * plane + k];
        count[c] += plane;
      }
    }
    for (std::size_t c = 0; c < channels; ++c) cs.mean[c] /= static_cast<double>(count[c]);
    for (auto i : idx) {
      const auto& img = images[i];
      const std::size_t plane = img.shape()[1] * img.shape()[2];
      for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t k = 0; k < plane; ++k) {
          const double d = img[c * plane + k] - cs.mean[c];
          cs.stddev[c] += d * d;
        }
      }
    }
    for (std::size_t c = 0; c < channels; ++c) {
      cs.stddev[c] = std::sqrt(cs.stddev[c] / static_cast<double>(count[c]));
      if (!(cs.stddev[c] > 0)) {
        throw std::invalid_argument("driver " + driver + " channel " + std::to_string(c) +
                                    " has zero standard deviation");
      }
    }
    stats.drivers.emplace(driver, std::move(cs));
  }
  return stats;
}

template <Real T>
void normalize_image(Tensor<T>& image, const ChannelStats& stats) {
  const std::size_t channels = image.shape().at(0);
  if (stats.mean.size() != channels) {
    throw ShapeError("normalization has " + std::to_string(stats.mean.size()) +
                     " channels, image " + shape_string(image.shape()));
  }
  const std::size_t plane = image.numel() / channels;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t k = 0; k < plane; ++k) {
      T& v = image[c * plane + k];
      v = static_cast<T>((static_cast<double>(v) - stats.mean[c]) / stats.stddev[c]);
    }
  }
}

template <Real T>
void denormalize_image(Tensor<T>& image, const ChannelStats& stats) {
  const std::size_t channels = image.shape().at(0);
  const std::size_t plane = image.numel() / channels;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t k = 0; k < plane; ++k) {
      T& v = image[c * plane + k];
      v = static_cast<T>(static_cast<double>(v) * stats.stddev[c] + stats.mean[c]);
    }
  }
}

template <Real T>
ChannelStats image_stats(const Tensor<T>& image) {
  const std::string id = "image";
  const std::string ids[] = {id};
  const Tensor<T> imgs[] = {image};
  return compute_normalization<T>(ids, imgs).at(id);
}

void write_stats(const fs::path& path, const NormalizationStats& stats) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FormatError("cannot write stats " + path.string());
  for (const auto& [driver, cs] : stats.drivers) {
    os << driver;
    for (double m : cs.mean) os << '\t' << format_real(m);
    for (double s : cs.stddev) os << '\t' << format_real(s);
    os << '\n';
  }
}

NormalizationStats read_stats(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open stats " + path.string());
  NormalizationStats stats;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() < 3 || (fields.size() - 1) % 2 != 0) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) +
                        ": expected driver id followed by equal numbers of means and stds");
    }
    const std::size_t channels = (fields.size() - 1) / 2;
    ChannelStats cs;
    for (std::size_t c = 0; c < channels; ++c) cs.mean.push_back(parse_real(fields[1 + c]));
    for (std::size_t c = 0; c < channels; ++c) cs.stddev.push_back(parse_real(fields[1 + channels + c]));
    stats.drivers[fields[0]] = std::move(cs);
  }
  return stats;
}

std::vector<std::string> distinct_drivers(std::span<const SampleRecord> records) {
  std::set<std::string> ids;
  for (const auto& r : records) ids.insert(r.driver_id);
  return {ids.begin(), ids.end()};
}

DatasetSplit split_by_driver(std::span<const SampleRecord> records, std::size_t n_val_drivers,
                             std::size_t n_test_drivers, std::uint64_t seed) {
  std::vector<std::string> drivers = distinct_drivers(records);
  if (drivers.size() < n_val_drivers + n_test_drivers + 1) {
    throw std::invalid_argument("split_by_driver needs at least " +
                                std::to_string(n_val_drivers + n_test_drivers + 1) +
                                " distinct drivers, got " + std::to_string(drivers.size()));
  }
  Rng rng(seed);
  for (std::size_t i = drivers.size(); i > 1; --i) {
    std::swap(drivers[i - 1], drivers[rng.below(i)]);
  }
  const std::set<std::string> val(drivers.begin(), drivers.begin() + static_cast<std::ptrdiff_t>(n_val_drivers));
  const std::set<std::string> test(drivers.begin() + static_cast<std::ptrdiff_t>(n_val_drivers),
                                   drivers.begin() + static_cast<std::ptrdiff_t>(n_val_drivers + n_test_drivers));
  DatasetSplit split;
  for (const auto& r : records) {
    if (val.count(r.driver_id)) split.validation.push_back(r);
    else if (test.count(r.driver_id)) split.test.push_back(r);
    else split.train.push_back(r);
  }
  return split;
}

double ols_feature_l1(std::span<const SampleRecord> records) {
  if (records.empty()) return 0.0;
  const auto n = static_cast<Eigen::Index>(records.size());
  constexpr auto k = static_cast<Eigen::Index>(kFeatureVectorLength);
  Eigen::MatrixXd design(n, k + 1);
  Eigen::MatrixXd targets(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = records[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < k; ++j) design(i, j) = r.features.values[static_cast<std::size_t>(j)];
    design(i, k) = 1.0;
    targets(i, 0) = r.gaze_x;
    targets(i, 1) = r.gaze_y;
  }
  const Eigen::MatrixXd coef = design.colPivHouseholderQr().solve(targets);
  const Eigen::MatrixXd residual = design * coef - targets;
  return residual.cwiseAbs().sum() / static_cast<double>(2 * n);
}

SynthesisReport synthesize_dataset(const fs::path& dir, const SynthesisOptions& opt) {
  if (opt.drivers < 3) throw std::invalid_argument("synthesize_dataset needs at least 3 drivers");
  if (opt.samples_per_driver == 0) throw std::invalid_argument("synthesize_dataset needs samples");
  fs::create_directories(dir / "eyes");
  Rng rng(opt.seed);

  SynthesisReport report;
  report.manifest = dir / "manifest.tsv";
  const double h = static_cast<double>(opt.height);
  const double w = static_cast<double>(opt.width);

  for (std::size_t d = 0; d < opt.drivers; ++d) {
    char id[32];
    std::snprintf(id, sizeof(id), "driver%02zu", d);
    // Per-driver appearance and seating position.
    const double brightness = rng.uniform(70.0, 180.0);
    const double contrast = rng.uniform(0.5, 0.85);
    std::vector<double> tint(opt.channels);
    for (auto& t : tint) t = rng.uniform(0.8, 1.2);
    const double seat_x = rng.uniform(700.0, 1100.0);
    const double seat_y = rng.uniform(250.0, 450.0);
    const double face_size = rng.uniform(220.0, 320.0);
    const double yaw_bias = rng.uniform(-5.0, 5.0);
    const double pitch_bias = rng.uniform(-5.0, 5.0);

    for (std::size_t s = 0; s < opt.samples_per_driver; ++s) {
      // Latent gaze in unit frame coordinates.
      const double u = rng.uniform(0.05, 0.95);
      const double v = rng.uniform(0.05, 0.95);

      SampleRecord r;
      r.driver_id = id;
      r.gaze_x = kFrameWidth * u;
      r.gaze_y = kFrameHeight * v;

      auto& f = r.features.values;
      const double box_w = face_size * rng.uniform(0.97, 1.03);
      const double box_h = box_w * 1.2;
      f[0] = seat_x + 40.0 * (u - 0.5) + rng.uniform(-8.0, 8.0);
      f[1] = seat_y + 25.0 * (v - 0.5) + rng.uniform(-8.0, 8.0);
      f[2] = box_w;
      f[3] = box_h;
      f[4] = rng.uniform(-6.0, 6.0);                                  // roll
      f[5] = pitch_bias + 30.0 * (v - 0.5) + rng.uniform(-1.0, 1.0);  // pitch
      f[6] = yaw_bias + 50.0 * (u - 0.5) + rng.uniform(-1.0, 1.0);    // yaw
      const double eye_y = f[1] + 0.38 * box_h;
      f[7] = f[0] + 0.30 * box_w;   // left-eye corner
      f[8] = eye_y + rng.uniform(-2.0, 2.0);
      f[9] = f[0] + 0.70 * box_w;   // right-eye corner
      f[10] = eye_y + rng.uniform(-2.0, 2.0);
      // The nose tip sits off the eye midpoint in proportion to head turn;
      // this offset carries the gaze exactly, the remaining cues are noisy.
      const double mid_x = 0.5 * (f[7] + f[9]);
      const double mid_y = 0.5 * (f[8] + f[10]);
      f[11] = mid_x + 80.0 * (u - 0.5);
      f[12] = mid_y + 60.0 + 50.0 * (v - 0.5);

      // Eye crop: skin background, iris blob following the gaze.
      Tensor<float> eye({opt.channels, opt.height, opt.width});
      const double cx = w * (0.25 + 0.5 * u);
      const double cy = h * (0.3 + 0.4 * v);
      const double sigma = std::max(1.0, h / 6.0);
      for (std::size_t c = 0; c < opt.channels; ++c) {
        for (std::size_t y = 0; y < opt.height; ++y) {
          for (std::size_t x = 0; x < opt.width; ++x) {
            const double dx = static_cast<double>(x) + 0.5 - cx;
            const double dy = static_cast<double>(y) + 0.5 - cy;
            const double iris = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            const double value = brightness * tint[c] * (1.0 - contrast * iris) + 2.0 * rng.normal();
            eye[(c * opt.height + y) * opt.width + x] = static_cast<float>(value);
          }
        }
      }
      char name[64];
      std::snprintf(name, sizeof(name), "eyes/%s_%04zu.drgz", id, s);
      r.eye_image = name;
      save_tensor(dir / name, eye);
      report.records.push_back(std::move(r));
    }
  }
  write_manifest(report.manifest, report.records);
  report.ols_l1 = ols_feature_l1(report.records);
  return report;
}

template <Real T>
std::vector<Tensor<T>> load_eye_images(const fs::path& manifest, std::span<const SampleRecord> records) {
  std::vector<Tensor<T>> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(load_tensor<T>(resolve_reference(manifest, r.eye_image)));
  return out;
}

template <Real T>
Dataset<T> make_dataset(std::span<const SampleRecord> records, std::vector<Tensor<T>> eyes,
                        const NormalizationStats& stats) {
  if (records.size() != eyes.size()) throw std::invalid_argument("make_dataset: record/image count mismatch");
  Dataset<T> data;
  for (std::size_t i = 0; i < records.size(); ++i) {
    normalize_image(eyes[i], stats.at(records[i].driver_id));
    data.drivers.push_back(records[i].driver_id);
    data.eyes.push_back(std::move(eyes[i]));
    data.features.push_back(records[i].features);
    data.gaze.push_back({records[i].gaze_x, records[i].gaze_y});
  }
  return data;
}

template <Real T>
Batch<T> make_batch(const Dataset<T>& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("make_batch: empty batch");
  const Shape& img = data.eyes[indices[0]].shape();
  const std::size_t b = indices.size();
  const std::size_t per = shape_numel(img);
  Batch<T> batch{Tensor<T>({b, img[0], img[1], img[2]}), Tensor<T>({b, kFeatureVectorLength}),
                 Tensor<T>({b, 2})};
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t s = indices[i];
    const auto& eye = data.eyes[s];
    if (eye.shape() != img) {
      throw ShapeError("sample " + std::to_string(s) + " eye shape " + shape_string(eye.shape()) +
                       " differs from " + shape_string(img));
    }
    std::copy(eye.data().begin(), eye.data().end(), batch.eyes.data().begin() + static_cast<std::ptrdiff_t>(i * per));
    for (std::size_t j = 0; j < kFeatureVectorLength; ++j) {
      batch.features[i * kFeatureVectorLength + j] = static_cast<T>(data.features[s].values[j]);
    }
    batch.gaze[2 * i] = static_cast<T>(data.gaze[s][0]);
    batch.gaze[2 * i + 1] = static_cast<T>(data.gaze[s][1]);
  }
  return batch;
}

#define DRGAZE_INSTANTIATE(T)                                                                      \
  template NormalizationStats compute_normalization<T>(std::span<const std::string>,               \
                                                       std::span<const Tensor<T>>);                \
  template void normalize_image<T>(Tensor<T>&, const ChannelStats&);                               \
  template void denormalize_image<T>(Tensor<T>&, const ChannelStats&);                             \
  template ChannelStats image_stats<T>(const Tensor<T>&);                                          \
  template std::vector<Tensor<T>> load_eye_images<T>(const fs::path&, std::span<const SampleRecord>); \
  template Dataset<T> make_dataset<T>(std::span<const SampleRecord>, std::vector<Tensor<T>>,       \
                                      const NormalizationStats&);                                  \
  template Batch<T> make_batch<T>(const Dataset<T>&, std::span<const std::size_t>);

DRGAZE_INSTANTIATE(float)
DRGAZE_INSTANTIATE(double)

#undef DRGAZE_INSTANTIATE

}  // namespace drgaze
