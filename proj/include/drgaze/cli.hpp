#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "drgaze/training.hpp"

namespace drgaze::cli {

enum class ExitCode : int {
  kOk = 0,
  kVerificationFailed = 1,
  kUsage = 2,
  kNumerical = 3,
};

enum class Precision { kF32, kF64 };

/// Everything a run reads from its key-value config file. Each key can also
/// be given as a `--key-name` flag (underscores become dashes).
struct RunConfig {
  TrainConfig train;
  Precision precision = Precision::kF32;
  std::string manifest;
  std::string out = "drgaze-run";
  std::string checkpoint;
  std::size_t val_drivers = 1;
  std::size_t test_drivers = 1;

  /// Throws ConfigError for unknown keys or malformed values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;

  static const std::vector<std::string>& keys();
  static bool is_model_key(const std::string& key);
};

/// Parses `key = value` lines; '#' starts a comment.
RunConfig load_run_config(const std::filesystem::path& path);

/// Manifest path from the config, falling back to $DRGAZE_DATA_DIR/manifest.tsv.
std::filesystem::path default_manifest(const RunConfig& config);

/// Entry point shared by the executable and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Overlay rendering, exposed for tests.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<unsigned char> rgb;  // row-major, 3 bytes per pixel
};

Image read_road_image(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Image& image);
Image read_ppm(const std::filesystem::path& path);
/// Filled disc of `radius` pixels centred at (x, y) in image coordinates.
void draw_disc(Image& image, double x, double y, double radius, unsigned char r, unsigned char g,
               unsigned char b);
/// Marker radius: 12 px at 1920 wide, scaled with the image width.
double marker_radius(const Image& image);

}  // namespace drgaze::cli
