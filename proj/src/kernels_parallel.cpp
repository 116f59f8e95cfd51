#include <omp.h>

#include <algorithm>
#include <vector>

#include "drgaze/kernels.hpp"

// OpenMP kernels. Work is split over whole output planes (or rows) so each
// element is owned by exactly one thread and its accumulation order matches
// the serial reference term for term.

namespace drgaze::kernels {

int max_threads() { return omp_get_max_threads(); }

namespace parallel {

namespace {

// Output columns x in [lo, hi) for which x*stride + k - pad lies in [0, extent).
struct ValidRange {
  std::size_t lo = 0;
  std::size_t hi = 0;
};

ValidRange valid_outputs(std::size_t out_extent, std::size_t in_extent, std::size_t stride,
                         std::size_t k, std::size_t pad) {
  ValidRange r;
  // smallest x with x*stride + k >= pad
  r.lo = k >= pad ? 0 : (pad - k + stride - 1) / stride;
  // largest x with x*stride + k - pad <= in_extent - 1
  const std::size_t limit = in_extent - 1 + pad;
  if (limit < k) {
    r.hi = r.lo;
    return r;
  }
  r.hi = std::min(out_extent, (limit - k) / stride + 1);
  if (r.hi < r.lo) r.hi = r.lo;
  return r;
}

}  // namespace

template <Real T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> out) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const std::size_t kh = g.kernel_height, kw = g.kernel_width;
  const std::size_t in_plane = g.in_height * g.in_width;
  const auto planes = static_cast<std::ptrdiff_t>(g.batch * g.out_channels);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < planes; ++p) {
    const std::size_t n = static_cast<std::size_t>(p) / g.out_channels;
    const std::size_t o = static_cast<std::size_t>(p) % g.out_channels;
    T* dst = out.data() + static_cast<std::size_t>(p) * oh * ow;
    std::fill(dst, dst + oh * ow, T{0});
    for (std::size_t c = 0; c < g.in_channels; ++c) {
      const T* src = input.data() + (n * g.in_channels + c) * in_plane;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const ValidRange ry = valid_outputs(oh, g.in_height, g.stride, ky, g.padding);
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const ValidRange rx = valid_outputs(ow, g.in_width, g.stride, kx, g.padding);
          const T w = weight[((o * g.in_channels + c) * kh + ky) * kw + kx];
          for (std::size_t y = ry.lo; y < ry.hi; ++y) {
            const T* row = src + (y * g.stride + ky - g.padding) * g.in_width;
            T* drow = dst + y * ow;
            for (std::size_t x = rx.lo; x < rx.hi; ++x) {
              drow[x] += w * row[x * g.stride + kx - g.padding];
            }
          }
        }
      }
    }
    const T b = bias[o];
    for (std::size_t i = 0; i < oh * ow; ++i) dst[i] = dst[i] + b;
  }
}

template <Real T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> grad_out,
                           std::span<const T> weight, std::span<T> grad_in) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const std::size_t kh = g.kernel_height, kw = g.kernel_width;
  const std::size_t in_plane = g.in_height * g.in_width;
  const auto planes = static_cast<std::ptrdiff_t>(g.batch * g.in_channels);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < planes; ++p) {
    const std::size_t n = static_cast<std::size_t>(p) / g.in_channels;
    const std::size_t c = static_cast<std::size_t>(p) % g.in_channels;
    T* dst = grad_in.data() + static_cast<std::size_t>(p) * in_plane;
    std::fill(dst, dst + in_plane, T{0});
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      const T* src = grad_out.data() + (n * g.out_channels + o) * oh * ow;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const ValidRange ry = valid_outputs(oh, g.in_height, g.stride, ky, g.padding);
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const ValidRange rx = valid_outputs(ow, g.in_width, g.stride, kx, g.padding);
          const T w = weight[((o * g.in_channels + c) * kh + ky) * kw + kx];
          for (std::size_t y = ry.lo; y < ry.hi; ++y) {
            T* drow = dst + (y * g.stride + ky - g.padding) * g.in_width;
            const T* grow = src + y * ow;
            for (std::size_t x = rx.lo; x < rx.hi; ++x) {
              drow[x * g.stride + kx - g.padding] += grow[x] * w;
            }
          }
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
  const std::size_t in_plane = g.in_height * g.in_width;
  const auto pairs = static_cast<std::ptrdiff_t>(g.out_channels * g.in_channels);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < pairs; ++p) {
    const std::size_t o = static_cast<std::size_t>(p) / g.in_channels;
    const std::size_t c = static_cast<std::size_t>(p) % g.in_channels;
    for (std::size_t ky = 0; ky < kh; ++ky) {
      const ValidRange ry = valid_outputs(oh, g.in_height, g.stride, ky, g.padding);
      for (std::size_t kx = 0; kx < kw; ++kx) {
        const ValidRange rx = valid_outputs(ow, g.in_width, g.stride, kx, g.padding);
        T acc = 0;
        for (std::size_t n = 0; n < g.batch; ++n) {
          const T* gsrc = grad_out.data() + (n * g.out_channels + o) * oh * ow;
          const T* isrc = input.data() + (n * g.in_channels + c) * in_plane;
          for (std::size_t y = ry.lo; y < ry.hi; ++y) {
            const T* grow = gsrc + y * ow;
            const T* irow = isrc + (y * g.stride + ky - g.padding) * g.in_width;
            for (std::size_t x = rx.lo; x < rx.hi; ++x) {
              acc += grow[x] * irow[x * g.stride + kx - g.padding];
            }
          }
        }
        grad_weight[((o * g.in_channels + c) * kh + ky) * kw + kx] = acc;
      }
    }
  }
}

template <Real T>
void conv2d_backward_bias(const ConvGeometry& g, std::span<const T> grad_out,
                          std::span<T> grad_bias) {
  const std::size_t plane = g.out_height() * g.out_width();
  const auto channels = static_cast<std::ptrdiff_t>(g.out_channels);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t o = 0; o < channels; ++o) {
    T acc = 0;
    for (std::size_t n = 0; n < g.batch; ++n) {
      const T* p = grad_out.data() + (n * g.out_channels + static_cast<std::size_t>(o)) * plane;
      for (std::size_t i = 0; i < plane; ++i) acc += p[i];
    }
    grad_bias[static_cast<std::size_t>(o)] = acc;
  }
}

template <Real T>
void linear_forward(const LinearGeometry& g, std::span<const T> input, std::span<const T> weight,
                    std::span<const T> bias, std::span<T> out) {
  const auto cells = static_cast<std::ptrdiff_t>(g.rows * g.out_features);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < cells; ++p) {
    const std::size_t r = static_cast<std::size_t>(p) / g.out_features;
    const std::size_t m = static_cast<std::size_t>(p) % g.out_features;
    const T* w = weight.data() + m * g.in_features;
    const T* x = input.data() + r * g.in_features;
    T acc = 0;
    for (std::size_t j = 0; j < g.in_features; ++j) acc += w[j] * x[j];
    out[static_cast<std::size_t>(p)] = acc + bias[m];
  }
}

template <Real T>
void linear_backward_input(const LinearGeometry& g, std::span<const T> grad_out,
                           std::span<const T> weight, std::span<T> grad_in) {
  const auto rows = static_cast<std::ptrdiff_t>(g.rows);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    T* dst = grad_in.data() + static_cast<std::size_t>(r) * g.in_features;
    std::fill(dst, dst + g.in_features, T{0});
    for (std::size_t m = 0; m < g.out_features; ++m) {
      const T gv = grad_out[static_cast<std::size_t>(r) * g.out_features + m];
      const T* w = weight.data() + m * g.in_features;
      for (std::size_t j = 0; j < g.in_features; ++j) dst[j] += gv * w[j];
    }
  }
}

template <Real T>
void linear_backward_weight(const LinearGeometry& g, std::span<const T> grad_out,
                            std::span<const T> input, std::span<T> grad_weight) {
  const auto outs = static_cast<std::ptrdiff_t>(g.out_features);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t m = 0; m < outs; ++m) {
    T* dst = grad_weight.data() + static_cast<std::size_t>(m) * g.in_features;
    std::fill(dst, dst + g.in_features, T{0});
    for (std::size_t r = 0; r < g.rows; ++r) {
      const T gv = grad_out[r * g.out_features + static_cast<std::size_t>(m)];
      const T* x = input.data() + r * g.in_features;
      for (std::size_t j = 0; j < g.in_features; ++j) dst[j] += gv * x[j];
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

}  // namespace parallel
}  // namespace drgaze::kernels
