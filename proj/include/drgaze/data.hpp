#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "drgaze/model.hpp"
#include "drgaze/tensor.hpp"

namespace drgaze {

/// One manifest line: a driver-view frame and the road pixel it looks at.
struct SampleRecord {
  std::string driver_id;
  std::string eye_image;  // DRGZ tensor [c,H,W]; relative paths resolve against the manifest
  FeatureVector features;
  double gaze_x = 0;
  double gaze_y = 0;
  std::optional<std::string> road_image;

  bool operator==(const SampleRecord&) const = default;
};

// Manifest: one record per line, tab-separated:
//   driver_id  eye_image  f0 .. f12  gaze_x  gaze_y  [road_image]
// Reals use '.' as radix regardless of locale.

std::vector<SampleRecord> load_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, std::span<const SampleRecord> records);

/// Resolves a record's file reference against the manifest's directory.
std::filesystem::path resolve_reference(const std::filesystem::path& manifest,
                                        const std::string& reference);

/// Shortest decimal text that parses back to exactly `v`.
std::string format_real(double v);
double parse_real(std::string_view text);

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;

  bool operator==(const ChannelStats&) const = default;
};

/// Per-driver, per-channel statistics of that driver's eye images.
struct NormalizationStats {
  std::map<std::string, ChannelStats> drivers;

  const ChannelStats& at(const std::string& driver) const;
  bool operator==(const NormalizationStats&) const = default;
};

/// Population mean and standard deviation per channel over all images of each
/// driver, pooled. Images are [c,H,W]. Throws if a channel has zero spread.
template <Real T>
NormalizationStats compute_normalization(std::span<const std::string> drivers,
                                         std::span<const Tensor<T>> images);

template <Real T>
void normalize_image(Tensor<T>& image, const ChannelStats& stats);

template <Real T>
void denormalize_image(Tensor<T>& image, const ChannelStats& stats);

/// Channel statistics of a single image, used when no driver statistics exist.
template <Real T>
ChannelStats image_stats(const Tensor<T>& image);

// Stats file: one line per driver, tab-separated: driver_id, c means, c stds.
void write_stats(const std::filesystem::path& path, const NormalizationStats& stats);
NormalizationStats read_stats(const std::filesystem::path& path);

struct DatasetSplit {
  std::vector<SampleRecord> train;
  std::vector<SampleRecord> validation;
  std::vector<SampleRecord> test;
};

/// Driver-disjoint split: seeded choice of validation and test drivers, all
/// others train. Records keep their manifest order inside each partition.
DatasetSplit split_by_driver(std::span<const SampleRecord> records, std::size_t n_val_drivers,
                             std::size_t n_test_drivers, std::uint64_t seed);

std::vector<std::string> distinct_drivers(std::span<const SampleRecord> records);

struct SynthesisOptions {
  std::size_t drivers = 13;
  std::size_t samples_per_driver = 20;
  std::uint64_t seed = 0;
  std::size_t channels = 3;
  std::size_t height = 36;
  std::size_t width = 60;
};

struct SynthesisReport {
  std::filesystem::path manifest;
  std::vector<SampleRecord> records;
  /// Mean absolute error of an ordinary least squares fit from the 13
  /// features (plus intercept) to the gaze targets.
  double ols_l1 = 0;
};

/// Writes `<dir>/manifest.tsv` and `<dir>/eyes/*.drgz`. Gaze targets are a
/// planted linear function of head-pose cues in the features, and the iris
/// position in each eye image follows the same latent gaze.
SynthesisReport synthesize_dataset(const std::filesystem::path& dir, const SynthesisOptions& options);

/// Least-squares oracle: fits gaze ~ A·features + b and returns mean |residual|.
double ols_feature_l1(std::span<const SampleRecord> records);

/// Samples held in memory, eye images already normalized.
template <Real T>
struct Dataset {
  std::vector<std::string> drivers;
  std::vector<Tensor<T>> eyes;  // [c,H,W] each
  std::vector<FeatureVector> features;
  std::vector<std::array<double, 2>> gaze;

  std::size_t size() const { return eyes.size(); }
  bool empty() const { return eyes.empty(); }
};

/// Reads every eye tensor of `records` (raw, unnormalized).
template <Real T>
std::vector<Tensor<T>> load_eye_images(const std::filesystem::path& manifest,
                                       std::span<const SampleRecord> records);

/// Builds a dataset, normalizing each image with its driver's statistics.
template <Real T>
Dataset<T> make_dataset(std::span<const SampleRecord> records, std::vector<Tensor<T>> eyes,
                        const NormalizationStats& stats);

/// Model inputs for a group of samples, stacked along a leading batch axis.
template <Real T>
struct Batch {
  Tensor<T> eyes;      // [B,c,H,W]
  Tensor<T> features;  // [B,13]
  Tensor<T> gaze;      // [B,2]
};

template <Real T>
Batch<T> make_batch(const Dataset<T>& data, std::span<const std::size_t> indices);

}  // namespace drgaze
