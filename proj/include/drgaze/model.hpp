#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "drgaze/ops.hpp"
#include "drgaze/tensor.hpp"

namespace drgaze {

/// Residual Dense Network hyperparameters of the left-eye branch.
struct EyeBranchConfig {
  std::size_t channels = 3;   // input image channels; also the projection width
  std::size_t features = 32;  // base feature width of every RDB
  std::size_t blocks = 32;    // number of residual dense blocks
  std::size_t growth = 4;     // channels added by each dense layer
  std::size_t layers = 4;     // dense layers per block
  std::size_t height = 36;
  std::size_t width = 60;

  /// Channels entering an RDB's local fusion: features + layers * growth.
  std::size_t local_fusion_inputs() const { return features + layers * growth; }
  /// Channels entering the global fusion: the initial map plus one per block.
  std::size_t global_fusion_inputs() const { return (blocks + 1) * features; }
  /// Input channels of dense layer t (0-based).
  std::size_t dense_layer_inputs(std::size_t t) const { return features + t * growth; }
  std::size_t output_length() const { return channels * height * width; }

  bool operator==(const EyeBranchConfig&) const = default;
};

struct ModelConfig {
  EyeBranchConfig eye;
  std::size_t feature_inputs = 13;
  std::size_t feature_embedding = 16;
  std::size_t hidden = 500;
  std::size_t outputs = 2;
  /// Head predicts unit coordinates that are multiplied by the frame size.
  bool scale_targets = false;

  std::size_t fused_length() const { return feature_embedding + eye.output_length(); }

  /// Throws std::invalid_argument on a zero extent.
  void validate() const;

  /// c=3, f=32, b=32, k=4, l=4 on a 3x36x60 eye crop.
  static ModelConfig standard();
  /// f=4, b=2, k=2, l=2 on a 3x8x12 crop with a narrow head, small enough
  /// for an exhaustive gradient check.
  static ModelConfig tiny();

  bool operator==(const ModelConfig&) const = default;
};

inline constexpr double kFrameWidth = 1920.0;
inline constexpr double kFrameHeight = 1080.0;
inline constexpr std::size_t kFeatureVectorLength = 13;

/// Precomputed facial features: face box (x, y, w, h), head roll/pitch/yaw in
/// degrees, left-eye corner (x, y), right-eye corner (x, y), nose tip (x, y).
struct FeatureVector {
  std::array<double, kFeatureVectorLength> values{};

  double box_x() const { return values[0]; }
  double box_y() const { return values[1]; }
  double box_w() const { return values[2]; }
  double box_h() const { return values[3]; }
  double roll() const { return values[4]; }
  double pitch() const { return values[5]; }
  double yaw() const { return values[6]; }

  bool operator==(const FeatureVector&) const = default;
};

template <Real T>
struct ConvLayer {
  Tensor<T> weight;  // [out, in, k, k]
  Tensor<T> bias;    // [out]
};

template <Real T>
struct LinearLayer {
  Tensor<T> weight;  // [out, in]
  Tensor<T> bias;    // [out]
};

/// conv -> ReLU -> conv with an identity shortcut.
template <Real T>
struct ResidualBlockParams {
  ConvLayer<T> first;
  ConvLayer<T> second;
};

template <Real T>
struct RdbParams {
  std::vector<ConvLayer<T>> dense;  // 3x3, layer t: features + t*growth -> growth
  ConvLayer<T> local_fusion;        // 1x1, features + layers*growth -> features
};

template <Real T>
struct EyeBranchParams {
  ConvLayer<T> initial;             // 3x3, channels -> features
  std::vector<RdbParams<T>> blocks;
  ConvLayer<T> global_fusion;       // 1x1, (blocks+1)*features -> features
  ConvLayer<T> projection;          // 3x3, features -> channels
};

template <Real T>
struct FusionHeadParams {
  LinearLayer<T> hidden;  // fused -> hidden
  LinearLayer<T> output;  // hidden -> 2
};

template <Real T>
struct DrGazeModel {
  ModelConfig config;
  EyeBranchParams<T> eye;
  LinearLayer<T> feature;  // 13 -> 16
  FusionHeadParams<T> head;
};

template <Real T>
struct NamedParam {
  std::string name;
  Tensor<T>* tensor;
};

/// Every parameter tensor in checkpoint order.
template <Real T>
std::vector<NamedParam<T>> parameters(DrGazeModel<T>& model);

/// Zero-valued parameters with the right shapes.
template <Real T>
DrGazeModel<T> make_model(const ModelConfig& config);

/// Xavier-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases.
/// Deterministic in `seed`.
template <Real T>
DrGazeModel<T> model_init(const ModelConfig& config, std::uint64_t seed);

double xavier_bound(std::size_t fan_in, std::size_t fan_out);

template <Real T>
ResidualBlockParams<T> make_residual_block(std::size_t channels);

/// Registers parameter tensors on a tape, once each, and maps them back to
/// their gradients after backward().
template <Real T>
class ParamBinder {
 public:
  ParamBinder(Tape<T>& tape, bool trainable) : tape_(tape), trainable_(trainable) {}

  Var<T> operator()(const Tensor<T>& param);
  Tape<T>& tape() { return tape_; }
  Tensor<T> grad(const Tensor<T>& param) const;

 private:
  Tape<T>& tape_;
  bool trainable_;
  std::unordered_map<const Tensor<T>*, Var<T>> bound_;
};

/// F(x) + x with F = conv3x3 -> ReLU -> conv3x3.
template <Real T>
Var<T> residual_block_forward(ParamBinder<T>& bind, Var<T> x, const ResidualBlockParams<T>& params);

template <Real T>
struct RdbOutputs {
  Var<T> output;        // block input + local fusion
  Var<T> local_fusion;  // 1x1 fusion of [input, dense_1..dense_l]
  std::size_t fusion_input_channels = 0;
};

template <Real T>
RdbOutputs<T> rdb_forward_detailed(ParamBinder<T>& bind, Var<T> input, const RdbParams<T>& params);

template <Real T>
Var<T> rdb_forward(ParamBinder<T>& bind, Var<T> input, const RdbParams<T>& params);

/// Eye image [N,c,H,W] -> eye feature [N, c*H*W].
template <Real T>
Var<T> eye_branch_forward(ParamBinder<T>& bind, Var<T> eye, const EyeBranchConfig& config,
                          const EyeBranchParams<T>& params);

/// Feature vector [13] or [N,13] -> embedding [16] or [N,16]. No activation.
template <Real T>
Var<T> feature_branch_forward(ParamBinder<T>& bind, Var<T> features, const LinearLayer<T>& params);

/// concat[facial embedding, eye feature] -> linear -> ReLU -> linear.
template <Real T>
Var<T> fusion_head_forward(ParamBinder<T>& bind, Var<T> facial, Var<T> eye_feature,
                           const FusionHeadParams<T>& params);

/// Eye [N,c,H,W] and features [N,13] -> gaze [N,2] in frame pixels.
template <Real T>
Var<T> model_forward(ParamBinder<T>& bind, Var<T> eye, Var<T> features, const DrGazeModel<T>& model);

/// Forward pass without gradient bookkeeping.
template <Real T>
Tensor<T> predict(const DrGazeModel<T>& model, const Tensor<T>& eye, const Tensor<T>& features);

}  // namespace drgaze
