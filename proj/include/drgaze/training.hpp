#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "drgaze/data.hpp"
#include "drgaze/model.hpp"

namespace drgaze {

/// Mean absolute coordinate error over all 2B residuals (per-pixel L1).
template <Real T>
Var<T> l1_loss(Var<T> pred, Var<T> truth);

template <Real T>
double l1_loss(const Tensor<T>& pred, const Tensor<T>& truth);

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-5;
};

template <Real T>
struct AdamState {
  AdamHyper hyper;
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;
  std::uint64_t step = 0;

  /// Zero moments shaped like `params`.
  static AdamState fresh(std::span<Tensor<T>* const> params, AdamHyper hyper = {});
};

/// One bias-corrected Adam update; epsilon is added outside the square root.
template <Real T>
void adam_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads,
               AdamState<T>& state, double lr);

/// Multi-step decay: base * gamma^(number of milestones <= epoch).
struct LrSchedule {
  double base = 1e-5;
  double gamma = 0.1;
  std::vector<std::size_t> milestones{40, 55};
};

double lr_at_epoch(const LrSchedule& schedule, std::size_t epoch);

struct TrainConfig {
  ModelConfig model;
  std::size_t batch_size = 32;
  std::size_t epochs = 60;
  std::uint64_t seed = 0;
  LrSchedule schedule;
  AdamHyper adam;

  void validate() const;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double lr = 0;
  double train_l1 = 0;  // mean over the epoch's training batches
  double val_l1 = 0;    // after the epoch's last update
};

template <Real T>
struct TrainResult {
  DrGazeModel<T> final_model;
  DrGazeModel<T> best_model;
  std::size_t best_epoch = 0;
  std::uint64_t optimizer_steps = 0;
  std::vector<EpochMetrics> metrics;
};

/// Seeded Fisher-Yates permutation of [0, n) for one epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

template <Real T>
using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Trains from Xavier initialization seeded by config.seed.
template <Real T>
TrainResult<T> train_loop(const TrainConfig& config, const Dataset<T>& train,
                          const Dataset<T>& validation, const EpochCallback<T>& on_epoch = {});

/// Trains starting from `initial`.
template <Real T>
TrainResult<T> train_loop(const TrainConfig& config, DrGazeModel<T> initial, const Dataset<T>& train,
                          const Dataset<T>& validation, const EpochCallback<T>& on_epoch = {});

/// Mean L1 over a dataset, accumulated in sample order. NaN if empty.
template <Real T>
double evaluate_l1(const DrGazeModel<T>& model, const Dataset<T>& data, std::size_t batch_size = 32);

/// Raw model outputs for every sample, [N,2].
template <Real T>
Tensor<T> predict_dataset(const DrGazeModel<T>& model, const Dataset<T>& data,
                          std::size_t batch_size = 32);

struct GradientCheckOptions {
  std::uint64_t seed = 7;
  std::size_t batch = 2;
  double step = 1e-5;
  /// Restricts the check to parameters whose name passes; all when empty.
  std::function<bool(const std::string&)> filter;
};

struct GradientCheckReport {
  bool passed = false;
  double tolerance = 0;
  double max_relative_error = 0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0;
  double worst_numeric = 0;
  std::size_t checked_elements = 0;
  std::size_t checked_tensors = 0;
};

/// Compares backprop gradients of l1_loss(model_forward) with central
/// differences for every parameter element, at 64-bit precision.
GradientCheckReport gradient_check(const ModelConfig& config, double tolerance,
                                   const GradientCheckOptions& options = {});

}  // namespace drgaze
