#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>
#include <vector>

#include "drgaze/data.hpp"
#include "drgaze/rng.hpp"
#include "drgaze/tensor.hpp"
#include "drgaze/training.hpp"

namespace testing_support {

template <typename T>
drgaze::Tensor<T> random_tensor(drgaze::Shape shape, drgaze::Rng& rng, double lo = -1.0, double hi = 1.0) {
  drgaze::Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}


/// Fresh scratch directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("drgaze-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Synthetic samples written under `dir`, loaded and normalized per driver.
template <typename T>
drgaze::Dataset<T> synthetic_dataset(const std::filesystem::path& dir, const drgaze::SynthesisOptions& options) {
  const auto report = drgaze::synthesize_dataset(dir, options);
  auto eyes = drgaze::load_eye_images<T>(report.manifest, report.records);
  std::vector<std::string> drivers;
  for (const auto& r : report.records) drivers.push_back(r.driver_id);
  const auto stats = drgaze::compute_normalization<T>(drivers, eyes);
  return drgaze::make_dataset<T>(report.records, std::move(eyes), stats);
}

/// Training recipe that overfits 16 synthetic samples: tiny eye branch, full
/// 500-unit head, lr 1e-3 with two late decays.
inline drgaze::TrainConfig overfit_config() {
  drgaze::TrainConfig c;
  c.model = drgaze::ModelConfig::tiny();
  c.model.hidden = 500;
  c.batch_size = 4;
  c.epochs = 500;
  c.seed = 0;
  c.schedule.base = 1e-3;
  c.schedule.milestones = {350, 450};
  return c;
}

inline drgaze::SynthesisOptions overfit_data_options() {
  drgaze::SynthesisOptions o;
  o.drivers = 4;
  o.samples_per_driver = 4;
  o.height = 8;
  o.width = 12;
  return o;
}

}  // namespace testing_support
