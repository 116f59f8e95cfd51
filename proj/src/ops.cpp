#include "drgaze/ops.hpp"

#include <algorithm>

#include "drgaze/errors.hpp"
#include "drgaze/kernels.hpp"

namespace drgaze {

namespace {

template <Real T>
Tape<T>& tape_of(Var<T> v) {
  if (v.tape() == nullptr) throw std::invalid_argument("operation on an unbound Var");
  return *v.tape();
}

kernels::ConvGeometry conv_geometry(const Shape& in, const Shape& w, const Shape& b,
                                    const Conv2dOptions& opt) {
  if (in.size() != 4 || w.size() != 4) {
    throw ShapeError("conv2d expects input [N,C,H,W] and weight [O,C,kh,kw], got input " +
                     shape_string(in) + " and weight " + shape_string(w));
  }
  if (in[1] != w[1]) {
    throw ShapeError("conv2d channel mismatch: input " + shape_string(in) + " has " +
                     std::to_string(in[1]) + " channels but weight " + shape_string(w) +
                     " expects " + std::to_string(w[1]));
  }
  if (b.size() != 1 || b[0] != w[0]) {
    throw ShapeError("conv2d bias " + shape_string(b) + " does not match weight " +
                     shape_string(w) + " output channels");
  }
  if (opt.stride == 0) throw ShapeError("conv2d stride must be positive");
  kernels::ConvGeometry g;
  g.batch = in[0];
  g.in_channels = in[1];
  g.in_height = in[2];
  g.in_width = in[3];
  g.out_channels = w[0];
  g.kernel_height = w[2];
  g.kernel_width = w[3];
  g.stride = opt.stride;
  g.padding = opt.padding;
  const auto check_extent = [&](std::size_t extent, std::size_t k, const char* axis) {
    const std::size_t padded = extent + 2 * opt.padding;
    if (padded < k || (padded - k) % opt.stride != 0) {
      throw ShapeError(std::string("conv2d output ") + axis + " is not a positive integer for input " +
                       shape_string(in) + ", weight " + shape_string(w) + ", stride " +
                       std::to_string(opt.stride) + ", padding " + std::to_string(opt.padding));
    }
  };
  check_extent(g.in_height, g.kernel_height, "height");
  check_extent(g.in_width, g.kernel_width, "width");
  return g;
}

}  // namespace

template <Real T>
Var<T> conv2d(Var<T> input, Var<T> weight, Var<T> bias, Conv2dOptions options) {
  Tape<T>& tape = tape_of(input);
  const kernels::ConvGeometry g =
      conv_geometry(input.shape(), weight.shape(), bias.shape(), options);

  Tensor<T> out({g.batch, g.out_channels, g.out_height(), g.out_width()});
  kernels::parallel::conv2d_forward<T>(g, input.value().data(), weight.value().data(),
                                       bias.value().data(), out.data());

  const Var<T> inputs[] = {input, weight, bias};
  return tape.record("conv2d", inputs, std::move(out),
                     [g](const Tensor<T>& grad_out, BackwardContext<T>& ctx) {
                       if (ctx.needs(0)) {
                         Tensor<T> gi(ctx.input(0).shape());
                         kernels::parallel::conv2d_backward_input<T>(g, grad_out.data(),
                                                                     ctx.input(1).data(), gi.data());
                         ctx.accumulate(0, std::move(gi));
                       }
                       if (ctx.needs(1)) {
                         Tensor<T> gw(ctx.input(1).shape());
                         kernels::parallel::conv2d_backward_weight<T>(g, grad_out.data(),
                                                                      ctx.input(0).data(), gw.data());
                         ctx.accumulate(1, std::move(gw));
                       }
                       if (ctx.needs(2)) {
                         Tensor<T> gb(ctx.input(2).shape());
                         kernels::parallel::conv2d_backward_bias<T>(g, grad_out.data(), gb.data());
                         if (backward_fault() == BackwardFault::kConvBias) {
                           for (auto& v : gb.data()) v *= T(1.5);
                         }
                         ctx.accumulate(2, std::move(gb));
                       }
                     });
}

template <Real T>
Var<T> linear(Var<T> x, Var<T> weight, Var<T> bias) {
  Tape<T>& tape = tape_of(x);
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  const Shape& bs = bias.shape();
  if ((xs.size() != 1 && xs.size() != 2) || ws.size() != 2) {
    throw ShapeError("linear expects x [n] or [B,n] and weight [m,n], got x " + shape_string(xs) +
                     " and weight " + shape_string(ws));
  }
  kernels::LinearGeometry g;
  g.rows = xs.size() == 2 ? xs[0] : 1;
  g.in_features = xs.back();
  g.out_features = ws[0];
  if (ws[1] != g.in_features) {
    throw ShapeError("linear extent mismatch: x " + shape_string(xs) + " vs weight " +
                     shape_string(ws));
  }
  if (bs.size() != 1 || bs[0] != g.out_features) {
    throw ShapeError("linear bias " + shape_string(bs) + " does not match weight " +
                     shape_string(ws));
  }

  Shape out_shape = xs.size() == 2 ? Shape{g.rows, g.out_features} : Shape{g.out_features};
  Tensor<T> out(out_shape);
  kernels::parallel::linear_forward<T>(g, x.value().data(), weight.value().data(),
                                       bias.value().data(), out.data());

  const Var<T> inputs[] = {x, weight, bias};
  return tape.record("linear", inputs, std::move(out),
                     [g](const Tensor<T>& grad_out, BackwardContext<T>& ctx) {
                       if (ctx.needs(0)) {
                         Tensor<T> gi(ctx.input(0).shape());
                         kernels::parallel::linear_backward_input<T>(g, grad_out.data(),
                                                                     ctx.input(1).data(), gi.data());
                         ctx.accumulate(0, std::move(gi));
                       }
                       if (ctx.needs(1)) {
                         Tensor<T> gw(ctx.input(1).shape());
                         kernels::parallel::linear_backward_weight<T>(g, grad_out.data(),
                                                                      ctx.input(0).data(), gw.data());
                         ctx.accumulate(1, std::move(gw));
                       }
                       if (ctx.needs(2)) {
                         Tensor<T> gb(ctx.input(2).shape());
                         kernels::parallel::linear_backward_bias<T>(g, grad_out.data(), gb.data());
                         ctx.accumulate(2, std::move(gb));
                       }
                     });
}

template <Real T>
Var<T> relu(Var<T> x) {
  Tape<T>& tape = tape_of(x);
  Tensor<T> out = x.value();
  for (auto& v : out.data()) v = v < T{0} ? T{0} : v;  // NaN passes through
  const Var<T> inputs[] = {x};
  return tape.record("relu", inputs, std::move(out),
                     [](const Tensor<T>& grad_out, BackwardContext<T>& ctx) {
                       // Subgradient 0 at exactly 0.
                       Tensor<T> g = grad_out;
                       auto in = ctx.input(0).data();
                       auto gd = g.data();
                       for (std::size_t i = 0; i < gd.size(); ++i) {
                         if (!(in[i] > T{0})) gd[i] = T{0};
                       }
                       ctx.accumulate(0, std::move(g));
                     });
}

template <Real T>
Var<T> add(Var<T> a, Var<T> b) {
  Tape<T>& tape = tape_of(a);
  if (a.shape() != b.shape()) {
    throw ShapeError("add shape mismatch: " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
  Tensor<T> out = a.value();
  auto od = out.data();
  auto bd = b.value().data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] += bd[i];
  const Var<T> inputs[] = {a, b};
  return tape.record("add", inputs, std::move(out),
                     [](const Tensor<T>& grad_out, BackwardContext<T>& ctx) {
                       if (ctx.needs(0)) ctx.accumulate(0, grad_out);
                       if (ctx.needs(1)) ctx.accumulate(1, grad_out);
                     });
}

template <Real T>
Var<T> concat(std::span<const Var<T>> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat needs at least one part");
  Tape<T>& tape = tape_of(parts[0]);
  std::vector<Tensor<T>> values;
  values.reserve(parts.size());
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    values.push_back(p.value());
    sizes.push_back(p.shape().size() > axis ? p.shape()[axis] : 0);
  }
  Tensor<T> out = drgaze::concat<T>(values, axis);
  return tape.record("concat", parts, std::move(out),
                     [axis, sizes](const Tensor<T>& grad_out, BackwardContext<T>& ctx) {
                       auto pieces = drgaze::split<T>(grad_out, axis, sizes);
                       for (std::size_t i = 0; i < pieces.size(); ++i) {
                         if (ctx.needs(i)) ctx.accumulate(i, std::move(pieces[i]));
                       }
                     });
}

template <Real T>
Var<T> reshape(Var<T> x, Shape shape) {
  Tape<T>& tape = tape_of(x);
  Tensor<T> out = x.value().reshaped(std::move(shape));
  const Var<T> inputs[] = {x};
  return tape.record("reshape", inputs, std::move(out),
                     [](const Tensor<T>& grad_out, BackwardContext<T>& ctx) {
                       ctx.accumulate(0, grad_out.reshaped(ctx.input(0).shape()));
                     });
}

template <Real T>
Var<T> flatten(Var<T> x, std::size_t from_axis) {
  return reshape(x, drgaze::flatten<T>(x.value(), from_axis).shape());
}

template <Real T>
Var<T> sum(Var<T> x) {
  Tape<T>& tape = tape_of(x);
  T acc = 0;
  for (auto v : x.value().data()) acc += v;
  Tensor<T> out(Shape{}, {acc});
  const Var<T> inputs[] = {x};
  return tape.record("sum", inputs, std::move(out),
                     [](const Tensor<T>& grad_out, BackwardContext<T>& ctx) {
                       ctx.accumulate(0, Tensor<T>::full(ctx.input(0).shape(), grad_out[0]));
                     });
}

template <Real T>
Var<T> scale_last_axis(Var<T> x, std::vector<T> factors) {
  Tape<T>& tape = tape_of(x);
  const Shape& s = x.shape();
  if (s.empty() || s.back() != factors.size()) {
    throw ShapeError("scale_last_axis: " + std::to_string(factors.size()) +
                     " factors for shape " + shape_string(s));
  }
  Tensor<T> out = x.value();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] *= factors[i % factors.size()];
  const Var<T> inputs[] = {x};
  return tape.record("scale", inputs, std::move(out),
                     [factors](const Tensor<T>& grad_out, BackwardContext<T>& ctx) {
                       Tensor<T> g = grad_out;
                       auto gd = g.data();
                       for (std::size_t i = 0; i < gd.size(); ++i) gd[i] *= factors[i % factors.size()];
                       ctx.accumulate(0, std::move(g));
                     });
}

#define DRGAZE_INSTANTIATE(T)                                                \
  template Var<T> conv2d<T>(Var<T>, Var<T>, Var<T>, Conv2dOptions);          \
  template Var<T> linear<T>(Var<T>, Var<T>, Var<T>);                         \
  template Var<T> relu<T>(Var<T>);                                           \
  template Var<T> add<T>(Var<T>, Var<T>);                                    \
  template Var<T> concat<T>(std::span<const Var<T>>, std::size_t);           \
  template Var<T> reshape<T>(Var<T>, Shape);                                 \
  template Var<T> flatten<T>(Var<T>, std::size_t);                           \
  template Var<T> sum<T>(Var<T>);                                            \
  template Var<T> scale_last_axis<T>(Var<T>, std::vector<T>);

DRGAZE_INSTANTIATE(float)
DRGAZE_INSTANTIATE(double)

#undef DRGAZE_INSTANTIATE

}  // namespace drgaze
