#include "drgaze/kernels.hpp"

// Reference kernels: one output element at a time, written for clarity.

namespace drgaze::kernels::serial {

template <Real T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> out) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const std::size_t kh = g.kernel_height, kw = g.kernel_width;
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
          T acc = 0;
          for (std::size_t c = 0; c < g.in_channels; ++c) {
            for (std::size_t ky = 0; ky < kh; ++ky) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * g.stride + ky) -
                                        static_cast<std::ptrdiff_t>(g.padding);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_height)) continue;
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * g.stride + kx) -
                                          static_cast<std::ptrdiff_t>(g.padding);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_width)) continue;
                const T w = weight[((o * g.in_channels + c) * kh + ky) * kw + kx];
                const T v = input[((n * g.in_channels + c) * g.in_height +
                                   static_cast<std::size_t>(iy)) * g.in_width +
                                  static_cast<std::size_t>(ix)];
                acc += w * v;
              }
            }
          }
          out[((n * g.out_channels + o) * oh + y) * ow + x] = acc + bias[o];
        }
      }
    }
  }
}

template <Real T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> grad_out,
                           std::span<const T> weight, std::span<T> grad_in) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const std::size_t kh = g.kernel_height, kw = g.kernel_width;
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t c = 0; c < g.in_channels; ++c) {
      for (std::size_t iy = 0; iy < g.in_height; ++iy) {
        for (std::size_t ix = 0; ix < g.in_width; ++ix) {
          T acc = 0;
          for (std::size_t o = 0; o < g.out_channels; ++o) {
            for (std::size_t ky = 0; ky < kh; ++ky) {
              const std::ptrdiff_t ty = static_cast<std::ptrdiff_t>(iy + g.padding) -
                                        static_cast<std::ptrdiff_t>(ky);
              if (ty < 0 || ty % static_cast<std::ptrdiff_t>(g.stride) != 0) continue;
              const std::size_t y = static_cast<std::size_t>(ty) / g.stride;
              if (y >= oh) continue;
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const std::ptrdiff_t tx = static_cast<std::ptrdiff_t>(ix + g.padding) -
                                          static_cast<std::ptrdiff_t>(kx);
                if (tx < 0 || tx % static_cast<std::ptrdiff_t>(g.stride) != 0) continue;
                const std::size_t x = static_cast<std::size_t>(tx) / g.stride;
                if (x >= ow) continue;
                acc += grad_out[((n * g.out_channels + o) * oh + y) * ow + x] *
                       weight[((o * g.in_channels + c) * kh + ky) * kw + kx];
              }
            }
          }
          grad_in[((n * g.in_channels + c) * g.in_height + iy) * g.in_width + ix] = acc;
        }
      }
    }
  }
}

template <Real T>
void conv2d_backward_weight(const ConvGeometry& g, std::span<const T> grad_out,
                            std::span<const T> input, std::span<T> grad_weight) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const std::size_t kh = g.kernel_height, kw = g.kernel_width;
  for (std::size_t o = 0; o < g.out_channels; ++o) {
    for (std::size_t c = 0; c < g.in_channels; ++c) {
      for (std::size_t ky = 0; ky < kh; ++ky) {
        for (std::size_t kx = 0; kx < kw; ++kx) {
          T acc = 0;
          for (std::size_t n = 0; n < g.batch; ++n) {
            for (std::size_t y = 0; y < oh; ++y) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * g.stride + ky) -
                                        static_cast<std::ptrdiff_t>(g.padding);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_height)) continue;
              for (std::size_t x = 0; x < ow; ++x) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * g.stride + kx) -
                                          static_cast<std::ptrdiff_t>(g.padding);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_width)) continue;
                acc += grad_out[((n * g.out_channels + o) * oh + y) * ow + x] *
                       input[((n * g.in_channels + c) * g.in_height +
                              static_cast<std::size_t>(iy)) * g.in_width +
                             static_cast<std::size_t>(ix)];
              }
            }
          }
          grad_weight[((o * g.in_channels + c) * kh + ky) * kw + kx] = acc;
        }
      }
    }
  }
}

template <Real T>
void conv2d_backward_bias(const ConvGeometry& g, std::span<const T> grad_out,
                          std::span<T> grad_bias) {
  const std::size_t plane = g.out_height() * g.out_width();
  for (std::size_t o = 0; o < g.out_channels; ++o) {
    T acc = 0;
    for (std::size_t n = 0; n < g.batch; ++n) {
      const T* p = grad_out.data() + (n * g.out_channels + o) * plane;
      for (std::size_t i = 0; i < plane; ++i) acc += p[i];
    }
    grad_bias[o] = acc;
  }
}

template <Real T>
void linear_forward(const LinearGeometry& g, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> out) {
  for (std::size_t r = 0; r < g.rows; ++r) {
    for (std::size_t m = 0; m < g.out_features; ++m) {
      T acc = 0;
      for (std::size_t j = 0; j < g.in_features; ++j) {
        acc += weight[m * g.in_features + j] * input[r * g.in_features + j];
      }
      out[r * g.out_features + m] = acc + bias[m];
    }
  }
}

template <Real T>
void linear_backward_input(const LinearGeometry& g, std::span<const T> grad_out,
                           std::span<const T> weight, std::span<T> grad_in) {
  for (std::size_t r = 0; r < g.rows; ++r) {
    for (std::size_t j = 0; j < g.in_features; ++j) {
      T acc = 0;
      for (std::size_t m = 0; m < g.out_features; ++m) {
        acc += grad_out[r * g.out_features + m] * weight[m * g.in_features + j];
      }
      grad_in[r * g.in_features + j] = acc;
    }
  }
}

template <Real T>
void linear_backward_weight(const LinearGeometry& g, std::span<const T> grad_out,
                            std::span<const T> input, std::span<T> grad_weight) {
  for (std::size_t m = 0; m < g.out_features; ++m) {
    for (std::size_t j = 0; j < g.in_features; ++j) {
      T acc = 0;
      for (std::size_t r = 0; r < g.rows; ++r) {
        acc += grad_out[r * g.out_features + m] * input[r * g.in_features + j];
      }
      grad_weight[m * g.in_features + j] = acc;
    }
  }
}

template <Real T>
void linear_backward_bias(const LinearGeometry& g, std::span<const T> grad_out,
                          std::span<T> grad_bias) {
  for (std::size_t m = 0; m < g.out_features; ++m) {
    T acc = 0;
    for (std::size_t r = 0; r < g.rows; ++r) acc += grad_out[r * g.out_features + m];
    grad_bias[m] = acc;
  }
}

#define DRGAZE_INSTANTIATE(T)                                                                   \
  template void conv2d_forward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>,  \
                                  std::span<const T>, std::span<T>);                            \
  template void conv2d_backward_input<T>(const ConvGeometry&, std::span<const T>,               \
                                         std::span<const T>, std::span<T>);                     \
  template void conv2d_backward_weight<T>(const ConvGeometry&, std::span<const T>,              \
                                          std::span<const T>, std::span<T>);                    \
  template void conv2d_backward_bias<T>(const ConvGeometry&, std::span<const T>, std::span<T>); \
  template void linear_forward<T>(const LinearGeometry&, std::span<const T>, std::span<const T>, \
                                  std::span<const T>, std::span<T>);                            \
  template void linear_backward_input<T>(const LinearGeometry&, std::span<const T>,             \
                                         std::span<const T>, std::span<T>);                     \
  template void linear_backward_weight<T>(const LinearGeometry&, std::span<const T>,            \
                                          std::span<const T>, std::span<T>);                    \
  template void linear_backward_bias<T>(const LinearGeometry&, std::span<const T>, std::span<T>);

DRGAZE_INSTANTIATE(float)
DRGAZE_INSTANTIATE(double)

#undef DRGAZE_INSTANTIATE

}  // namespace drgaze::kernels::serial
