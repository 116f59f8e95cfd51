#include "drgaze/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "drgaze/errors.hpp"
#include "drgaze/finite_diff.hpp"
#include "drgaze/rng.hpp"

namespace drgaze {

template <Real T>
Var<T> l1_loss(Var<T> pred, Var<T> truth) {
  if (pred.shape() != truth.shape()) {
    throw ShapeError("l1_loss shape mismatch: prediction " + shape_string(pred.shape()) +
                     " vs truth " + shape_string(truth.shape()));
  }
  const auto p = pred.value().data();
  const auto t = truth.value().data();
  const T n = static_cast<T>(p.size());
  T acc = 0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - t[i]);
  const Var<T> inputs[] = {pred, truth};
  return pred.tape()->record(
      "l1_loss", inputs, Tensor<T>(Shape{}, {acc / n}),
      [n](const Tensor<T>& grad_out, BackwardContext<T>& ctx) {
        const auto pv = ctx.input(0).data();
        const auto tv = ctx.input(1).data();
        Tensor<T> g(ctx.input(0).shape());
        const T scale = grad_out[0] / n;
        for (std::size_t i = 0; i < pv.size(); ++i) {
          const T r = pv[i] - tv[i];
          g[i] = r > T{0} ? scale : (r < T{0} ? -scale : T{0});
        }
        if (ctx.needs(0)) ctx.accumulate(0, g);
        if (ctx.needs(1)) {
          for (auto& v : g.data()) v = -v;
          ctx.accumulate(1, std::move(g));
        }
      });
}

template <Real T>
double l1_loss(const Tensor<T>& pred, const Tensor<T>& truth) {
  if (pred.shape() != truth.shape()) {
    throw ShapeError("l1_loss shape mismatch: prediction " + shape_string(pred.shape()) +
                     " vs truth " + shape_string(truth.shape()));
  }
  double acc = 0;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    acc += std::abs(static_cast<double>(pred[i]) - static_cast<double>(truth[i]));
  }
  return acc / static_cast<double>(pred.numel());
}

template <Real T>
AdamState<T> AdamState<T>::fresh(std::span<Tensor<T>* const> params, AdamHyper hyper) {
  AdamState s;
  s.hyper = hyper;
  for (const Tensor<T>* p : params) {
    s.first_moment.emplace_back(p->shape());
    s.second_moment.emplace_back(p->shape());
  }
  return s;
}

template <Real T>
void adam_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>> grads,
               AdamState<T>& state, double lr) {
  if (!(lr > 0)) throw std::invalid_argument("adam_step: learning rate must be positive");
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters, " +
                     std::to_string(grads.size()) + " gradients, " +
                     std::to_string(state.first_moment.size()) + " moment slots");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i].shape() || params[i]->shape() != state.first_moment[i].shape()) {
      throw ShapeError("adam_step: parameter " + std::to_string(i) + " has shape " +
                       shape_string(params[i]->shape()) + " but gradient " +
                       shape_string(grads[i].shape()));
    }
  }
  const auto& h = state.hyper;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(h.beta1, t);
  const double correction2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->data();
    auto g = grads[i].data();
    auto m = state.first_moment[i].data();
    auto v = state.second_moment[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gk = g[k];
      const double mk = h.beta1 * m[k] + (1.0 - h.beta1) * gk;
      const double vk = h.beta2 * v[k] + (1.0 - h.beta2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      const double m_hat = mk / correction1;
      const double v_hat = vk / correction2;
      p[k] = static_cast<T>(p[k] - lr * m_hat / (std::sqrt(v_hat) + h.eps));
    }
  }
}

double lr_at_epoch(const LrSchedule& schedule, std::size_t epoch) {
  const auto decays = std::count_if(schedule.milestones.begin(), schedule.milestones.end(),
                                    [epoch](std::size_t m) { return m <= epoch; });
  return schedule.base * std::pow(schedule.gamma, static_cast<double>(decays));
}

void TrainConfig::validate() const {
  model.validate();
  if (batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
  if (epochs == 0) throw std::invalid_argument("epochs must be >= 1");
  if (!(schedule.base > 0)) throw std::invalid_argument("learning rate must be positive");
  if (!(schedule.gamma > 0)) throw std::invalid_argument("gamma must be positive");
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed, epoch + 1);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

template <Real T>
Tensor<T> predict_dataset(const DrGazeModel<T>& model, const Dataset<T>& data, std::size_t batch_size) {
  if (batch_size == 0) batch_size = 1;
  Tensor<T> out({std::max<std::size_t>(data.size(), 1), model.config.outputs});
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    Batch<T> b = make_batch(data, idx);
    Tensor<T> pred = predict(model, b.eyes, b.features);
    std::copy(pred.data().begin(), pred.data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(start * model.config.outputs));
  }
  return out;
}

template <Real T>
double evaluate_l1(const DrGazeModel<T>& model, const Dataset<T>& data, std::size_t batch_size) {
  if (data.empty()) return std::numeric_limits<double>::quiet_NaN();
  const Tensor<T> pred = predict_dataset(model, data, batch_size);
  double acc = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    acc += std::abs(static_cast<double>(pred[2 * i]) - data.gaze[i][0]);
    acc += std::abs(static_cast<double>(pred[2 * i + 1]) - data.gaze[i][1]);
  }
  return acc / static_cast<double>(2 * data.size());
}

template <Real T>
TrainResult<T> train_loop(const TrainConfig& config, const Dataset<T>& train,
                          const Dataset<T>& validation, const EpochCallback<T>& on_epoch) {
  config.validate();
  return train_loop(config, model_init<T>(config.model, config.seed), train, validation, on_epoch);
}

template <Real T>
TrainResult<T> train_loop(const TrainConfig& config, DrGazeModel<T> initial, const Dataset<T>& train,
                          const Dataset<T>& validation, const EpochCallback<T>& on_epoch) {
  config.validate();
  if (train.empty()) throw std::invalid_argument("train_loop: empty training set");

  TrainResult<T> result;
  result.final_model = std::move(initial);
  auto named = parameters(result.final_model);
  std::vector<Tensor<T>*> params;
  for (auto& p : named) params.push_back(p.tensor);
  AdamState<T> adam = AdamState<T>::fresh(params, config.adam);

  double best_score = std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at_epoch(config.schedule, epoch);
    const auto order = epoch_order(train.size(), config.seed, epoch);
    double loss_sum = 0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      Batch<T> batch = make_batch(train, idx);

      Tape<T> tape;
      ParamBinder<T> bind(tape, true);
      Var<T> pred = model_forward(bind, tape.constant(std::move(batch.eyes)),
                                  tape.constant(std::move(batch.features)), result.final_model);
      Var<T> loss = l1_loss(pred, tape.constant(std::move(batch.gaze)));
      const double loss_value = loss.value()[0];
      if (!std::isfinite(loss_value)) {
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_index));
      }
      tape.backward(loss);
      std::vector<Tensor<T>> grads;
      grads.reserve(params.size());
      for (const Tensor<T>* p : params) grads.push_back(bind.grad(*p));
      adam_step<T>(params, grads, adam, lr);
      loss_sum += loss_value * static_cast<double>(idx.size());
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.lr = lr;
    m.train_l1 = loss_sum / static_cast<double>(train.size());
    m.val_l1 = evaluate_l1(result.final_model, validation, config.batch_size);
    const double score = validation.empty() ? m.train_l1 : m.val_l1;
    if (score < best_score) {
      best_score = score;
      result.best_epoch = epoch;
      result.best_model = result.final_model;
    }
    result.metrics.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  if (result.best_model.eye.blocks.empty() && !result.final_model.eye.blocks.empty()) {
    // Only reachable when every score was NaN.
    result.best_model = result.final_model;
  }
  result.optimizer_steps = adam.step;
  return result;
}

GradientCheckReport gradient_check(const ModelConfig& config, double tolerance,
                                   const GradientCheckOptions& options) {
  using T = double;
  DrGazeModel<T> model = model_init<T>(config, options.seed);
  Rng rng(options.seed, 0x9e3779b97f4a7c15ULL);
  auto named = parameters(model);
  // Non-zero biases so every bias gradient path is exercised away from the origin.
  for (auto& p : named) {
    if (p.tensor->rank() == 1) {
      for (auto& v : p.tensor->data()) v = rng.uniform(-0.1, 0.1);
    }
  }
  const std::size_t b = options.batch;
  const EyeBranchConfig& e = config.eye;
  Tensor<T> eye({b, e.channels, e.height, e.width});
  for (auto& v : eye.data()) v = rng.normal();
  Tensor<T> features({b, config.feature_inputs});
  for (auto& v : features.data()) v = rng.normal();
  Tensor<T> target({b, config.outputs});
  for (auto& v : target.data()) v = rng.uniform(-1.0, 1.0);

  const auto loss_of = [&](ParamBinder<T>& bind) {
    Tape<T>& tape = bind.tape();
    Var<T> pred = model_forward(bind, tape.constant(eye), tape.constant(features), model);
    return l1_loss(pred, tape.constant(target));
  };

  Tape<T> tape;
  ParamBinder<T> bind(tape, true);
  tape.backward(loss_of(bind));

  const std::function<T()> f = [&] {
    Tape<T> t;
    ParamBinder<T> frozen(t, false);
    return loss_of(frozen).value()[0];
  };

  GradientCheckReport report;
  report.tolerance = tolerance;
  report.max_relative_error = 0;
  for (auto& p : named) {
    if (options.filter && !options.filter(p.name)) continue;
    const Tensor<T> analytic = bind.grad(*p.tensor);
    Tensor<T>* const target_param[] = {p.tensor};
    const Tensor<T> numeric = finite_diff_gradient<T>(f, target_param, options.step).front();
    for (std::size_t i = 0; i < analytic.numel(); ++i) {
      const double err = relative_error(analytic[i], numeric[i]);
      if (err > report.max_relative_error || report.worst_parameter.empty()) {
        report.max_relative_error = std::max(report.max_relative_error, err);
        report.worst_parameter = p.name;
        report.worst_index = i;
        report.worst_analytic = analytic[i];
        report.worst_numeric = numeric[i];
      }
    }
    report.checked_elements += analytic.numel();
    ++report.checked_tensors;
  }
  report.passed = report.checked_elements > 0 && report.max_relative_error <= tolerance;
  return report;
}

#define DRGAZE_INSTANTIATE(T)                                                                     \
  template Var<T> l1_loss<T>(Var<T>, Var<T>);                                                     \
  template double l1_loss<T>(const Tensor<T>&, const Tensor<T>&);                                 \
  template struct AdamState<T>;                                                                   \
  template void adam_step<T>(std::span<Tensor<T>* const>, std::span<const Tensor<T>>,             \
                             AdamState<T>&, double);                                              \
  template Tensor<T> predict_dataset<T>(const DrGazeModel<T>&, const Dataset<T>&, std::size_t);   \
  template double evaluate_l1<T>(const DrGazeModel<T>&, const Dataset<T>&, std::size_t);          \
  template TrainResult<T> train_loop<T>(const TrainConfig&, const Dataset<T>&, const Dataset<T>&, \
                                        const EpochCallback<T>&);                                 \
  template TrainResult<T> train_loop<T>(const TrainConfig&, DrGazeModel<T>, const Dataset<T>&,    \
                                        const Dataset<T>&, const EpochCallback<T>&);

DRGAZE_INSTANTIATE(float)
DRGAZE_INSTANTIATE(double)

#undef DRGAZE_INSTANTIATE

}  // namespace drgaze
