#include "drgaze/model.hpp"

#include <cmath>
#include <stdexcept>

#include "drgaze/errors.hpp"
#include "drgaze/rng.hpp"

namespace drgaze {

void ModelConfig::validate() const {
  const auto require = [](std::size_t v, const char* name) {
    if (v == 0) throw std::invalid_argument(std::string("model config: ") + name + " must be >= 1");
  };
  require(eye.channels, "channels");
  require(eye.features, "features");
  require(eye.blocks, "blocks");
  require(eye.growth, "growth");
  require(eye.layers, "layers");
  require(eye.height, "height");
  require(eye.width, "width");
  require(feature_inputs, "feature_inputs");
  require(feature_embedding, "feature_embedding");
  require(hidden, "hidden");
  require(outputs, "outputs");
  if (scale_targets && outputs != 2) {
    throw std::invalid_argument("model config: scale_targets needs exactly 2 outputs");
  }
}

ModelConfig ModelConfig::standard() { return ModelConfig{}; }

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.eye.features = 4;
  c.eye.blocks = 2;
  c.eye.growth = 2;
  c.eye.layers = 2;
  c.eye.height = 8;
  c.eye.width = 12;
  c.hidden = 32;
  return c;
}

double xavier_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

namespace {

template <Real T>
ConvLayer<T> make_conv(std::size_t in, std::size_t out, std::size_t k) {
  return {Tensor<T>({out, in, k, k}), Tensor<T>({out})};
}

template <Real T>
LinearLayer<T> make_linear(std::size_t in, std::size_t out) {
  return {Tensor<T>({out, in}), Tensor<T>({out})};
}

void append_conv(auto& out, const std::string& name, auto& layer) {
  out.push_back({name + ".weight", &layer.weight});
  out.push_back({name + ".bias", &layer.bias});
}

}  // namespace

template <Real T>
ResidualBlockParams<T> make_residual_block(std::size_t channels) {
  return {make_conv<T>(channels, channels, 3), make_conv<T>(channels, channels, 3)};
}

template <Real T>
DrGazeModel<T> make_model(const ModelConfig& config) {
  config.validate();
  const EyeBranchConfig& e = config.eye;
  DrGazeModel<T> m;
  m.config = config;
  m.eye.initial = make_conv<T>(e.channels, e.features, 3);
  m.eye.blocks.resize(e.blocks);
  for (auto& block : m.eye.blocks) {
    for (std::size_t t = 0; t < e.layers; ++t) {
      block.dense.push_back(make_conv<T>(e.dense_layer_inputs(t), e.growth, 3));
    }
    block.local_fusion = make_conv<T>(e.local_fusion_inputs(), e.features, 1);
  }
  m.eye.global_fusion = make_conv<T>(e.global_fusion_inputs(), e.features, 1);
  m.eye.projection = make_conv<T>(e.features, e.channels, 3);
  m.feature = make_linear<T>(config.feature_inputs, config.feature_embedding);
  m.head.hidden = make_linear<T>(config.fused_length(), config.hidden);
  m.head.output = make_linear<T>(config.hidden, config.outputs);
  return m;
}

template <Real T>
std::vector<NamedParam<T>> parameters(DrGazeModel<T>& model) {
  std::vector<NamedParam<T>> out;
  append_conv(out, "eye.initial", model.eye.initial);
  for (std::size_t n = 0; n < model.eye.blocks.size(); ++n) {
    auto& block = model.eye.blocks[n];
    const std::string prefix = "eye.rdb" + std::to_string(n);
    for (std::size_t t = 0; t < block.dense.size(); ++t) {
      append_conv(out, prefix + ".dense" + std::to_string(t), block.dense[t]);
    }
    append_conv(out, prefix + ".local_fusion", block.local_fusion);
  }
  append_conv(out, "eye.global_fusion", model.eye.global_fusion);
  append_conv(out, "eye.projection", model.eye.projection);
  append_conv(out, "feature", model.feature);
  append_conv(out, "head.hidden", model.head.hidden);
  append_conv(out, "head.output", model.head.output);
  return out;
}

template <Real T>
DrGazeModel<T> model_init(const ModelConfig& config, std::uint64_t seed) {
  DrGazeModel<T> m = make_model<T>(config);
  Rng rng(seed);
  for (auto& p : parameters(m)) {
    const Shape& s = p.tensor->shape();
    if (s.size() == 1) continue;  // biases stay zero
    std::size_t receptive = 1;
    for (std::size_t d = 2; d < s.size(); ++d) receptive *= s[d];
    const double bound = xavier_bound(s[1] * receptive, s[0] * receptive);
    for (auto& w : p.tensor->data()) w = static_cast<T>((2.0 * rng.uniform() - 1.0) * bound);
  }
  return m;
}

template <Real T>
Var<T> ParamBinder<T>::operator()(const Tensor<T>& param) {
  auto it = bound_.find(&param);
  if (it != bound_.end()) return it->second;
  Var<T> v = trainable_ ? tape_.parameter(param) : tape_.constant(param);
  bound_.emplace(&param, v);
  return v;
}

template <Real T>
Tensor<T> ParamBinder<T>::grad(const Tensor<T>& param) const {
  auto it = bound_.find(&param);
  if (it == bound_.end()) return Tensor<T>::zeros(param.shape());
  return tape_.grad(it->second);
}

namespace {

template <Real T>
Var<T> apply_conv(ParamBinder<T>& bind, Var<T> x, const ConvLayer<T>& layer) {
  const std::size_t k = layer.weight.shape().at(2);
  return conv2d(x, bind(layer.weight), bind(layer.bias), Conv2dOptions{1, (k - 1) / 2});
}

}  // namespace

template <Real T>
Var<T> residual_block_forward(ParamBinder<T>& bind, Var<T> x, const ResidualBlockParams<T>& params) {
  const std::size_t channels = x.shape().at(1);
  if (params.first.weight.shape().at(1) != channels || params.second.weight.shape().at(0) != channels) {
    throw ShapeError("residual block: input has " + std::to_string(channels) +
                     " channels but convolutions are " + shape_string(params.first.weight.shape()) +
                     " and " + shape_string(params.second.weight.shape()));
  }
  Var<T> h = relu(apply_conv(bind, x, params.first));
  h = apply_conv(bind, h, params.second);
  return add(h, x);
}

template <Real T>
RdbOutputs<T> rdb_forward_detailed(ParamBinder<T>& bind, Var<T> input, const RdbParams<T>& params) {
  if (input.shape().size() != 4) {
    throw ShapeError("rdb_forward expects [N,C,H,W], got " + shape_string(input.shape()));
  }
  const std::size_t base = input.shape()[1];
  std::vector<Var<T>> features{input};
  std::size_t channels = base;
  for (std::size_t t = 0; t < params.dense.size(); ++t) {
    const Shape& ws = params.dense[t].weight.shape();
    if (ws.at(1) != channels) {
      throw ShapeError("rdb dense layer " + std::to_string(t) + " expects " +
                       std::to_string(ws.at(1)) + " input channels but receives " +
                       std::to_string(channels));
    }
    Var<T> joined = features.size() == 1 ? input : concat<T>(features, 1);
    features.push_back(relu(apply_conv(bind, joined, params.dense[t])));
    channels += ws.at(0);
  }
  const Shape& fs = params.local_fusion.weight.shape();
  if (fs.at(1) != channels || fs.at(0) != base) {
    throw ShapeError("rdb local fusion " + shape_string(fs) + " must map " +
                     std::to_string(channels) + " channels back to " + std::to_string(base));
  }
  Var<T> all = features.size() == 1 ? input : concat<T>(features, 1);
  Var<T> fused = apply_conv(bind, all, params.local_fusion);
  return {add(input, fused), fused, channels};
}

template <Real T>
Var<T> rdb_forward(ParamBinder<T>& bind, Var<T> input, const RdbParams<T>& params) {
  return rdb_forward_detailed(bind, input, params).output;
}

template <Real T>
Var<T> eye_branch_forward(ParamBinder<T>& bind, Var<T> eye, const EyeBranchConfig& config,
                          const EyeBranchParams<T>& params) {
  const Shape& s = eye.shape();
  if (s.size() != 4 || s[1] != config.channels || s[2] != config.height || s[3] != config.width) {
    throw ShapeError("eye branch expects input [N," + std::to_string(config.channels) + "," +
                     std::to_string(config.height) + "," + std::to_string(config.width) +
                     "], got " + shape_string(s));
  }
  Var<T> initial = apply_conv(bind, eye, params.initial);
  std::vector<Var<T>> fusion_inputs{initial};
  Var<T> current = initial;
  for (const auto& block : params.blocks) {
    RdbOutputs<T> out = rdb_forward_detailed(bind, current, block);
    fusion_inputs.push_back(out.local_fusion);
    current = out.output;
  }
  Var<T> global = apply_conv(bind, concat<T>(fusion_inputs, 1), params.global_fusion);
  Var<T> residual = add(initial, global);
  Var<T> projected = apply_conv(bind, residual, params.projection);
  return flatten(projected, 1);
}

template <Real T>
Var<T> feature_branch_forward(ParamBinder<T>& bind, Var<T> features, const LinearLayer<T>& params) {
  const Shape& s = features.shape();
  if (s.empty() || s.back() != params.weight.shape().at(1)) {
    throw ShapeError("feature branch expects " + std::to_string(params.weight.shape().at(1)) +
                     " features, got shape " + shape_string(s));
  }
  return linear(features, bind(params.weight), bind(params.bias));
}

template <Real T>
Var<T> fusion_head_forward(ParamBinder<T>& bind, Var<T> facial, Var<T> eye_feature,
                           const FusionHeadParams<T>& params) {
  const Shape& fs = facial.shape();
  const Shape& es = eye_feature.shape();
  const std::size_t expected = params.hidden.weight.shape().at(1);
  if (fs.size() != es.size() || fs.empty() || fs.size() > 2 || fs.back() + es.back() != expected ||
      (fs.size() == 2 && fs[0] != es[0])) {
    throw ShapeError("fusion head expects facial and eye features totalling " +
                     std::to_string(expected) + ", got " + shape_string(fs) + " and " +
                     shape_string(es));
  }
  const Var<T> parts[] = {facial, eye_feature};
  Var<T> fused = concat<T>(parts, fs.size() - 1);
  Var<T> hidden = relu(linear(fused, bind(params.hidden.weight), bind(params.hidden.bias)));
  return linear(hidden, bind(params.output.weight), bind(params.output.bias));
}

template <Real T>
Var<T> model_forward(ParamBinder<T>& bind, Var<T> eye, Var<T> features, const DrGazeModel<T>& model) {
  if (features.shape().size() == 2 && eye.shape().size() == 4 &&
      features.shape()[0] != eye.shape()[0]) {
    throw ShapeError("batch mismatch: eye " + shape_string(eye.shape()) + " vs features " +
                     shape_string(features.shape()));
  }
  Var<T> eye_feature = eye_branch_forward(bind, eye, model.config.eye, model.eye);
  Var<T> facial = feature_branch_forward(bind, features, model.feature);
  Var<T> gaze = fusion_head_forward(bind, facial, eye_feature, model.head);
  if (model.config.scale_targets) {
    gaze = scale_last_axis(gaze, std::vector<T>{T(kFrameWidth), T(kFrameHeight)});
  }
  return gaze;
}

template <Real T>
Tensor<T> predict(const DrGazeModel<T>& model, const Tensor<T>& eye, const Tensor<T>& features) {
  Tape<T> tape;
  ParamBinder<T> bind(tape, false);
  return model_forward(bind, tape.constant(eye), tape.constant(features), model).value();
}

#define DRGAZE_INSTANTIATE(T)                                                                     \
  template ResidualBlockParams<T> make_residual_block<T>(std::size_t);                            \
  template DrGazeModel<T> make_model<T>(const ModelConfig&);                                      \
  template std::vector<NamedParam<T>> parameters<T>(DrGazeModel<T>&);                             \
  template DrGazeModel<T> model_init<T>(const ModelConfig&, std::uint64_t);                       \
  template class ParamBinder<T>;                                                                  \
  template Var<T> residual_block_forward<T>(ParamBinder<T>&, Var<T>, const ResidualBlockParams<T>&); \
  template RdbOutputs<T> rdb_forward_detailed<T>(ParamBinder<T>&, Var<T>, const RdbParams<T>&);   \
  template Var<T> rdb_forward<T>(ParamBinder<T>&, Var<T>, const RdbParams<T>&);                   \
  template Var<T> eye_branch_forward<T>(ParamBinder<T>&, Var<T>, const EyeBranchConfig&,          \
                                        const EyeBranchParams<T>&);                               \
  template Var<T> feature_branch_forward<T>(ParamBinder<T>&, Var<T>, const LinearLayer<T>&);      \
  template Var<T> fusion_head_forward<T>(ParamBinder<T>&, Var<T>, Var<T>, const FusionHeadParams<T>&); \
  template Var<T> model_forward<T>(ParamBinder<T>&, Var<T>, Var<T>, const DrGazeModel<T>&);       \
  template Tensor<T> predict<T>(const DrGazeModel<T>&, const Tensor<T>&, const Tensor<T>&);

DRGAZE_INSTANTIATE(float)
DRGAZE_INSTANTIATE(double)

#undef DRGAZE_INSTANTIATE

}  // namespace drgaze
