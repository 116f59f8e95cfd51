#pragma once

#include <cstddef>
#include <span>

#include "drgaze/tensor.hpp"

// Raw compute kernels behind the differentiable ops.
//
// Every kernel exists twice: `serial::` is the plain nested-loop reference and
// `parallel::` distributes independent output planes over OpenMP threads.
// Both accumulate each output element over the same index sequence, so their
// results are bitwise identical for any thread count.

namespace drgaze::kernels {

struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t in_height = 1;
  std::size_t in_width = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_height = 1;
  std::size_t kernel_width = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_height() const {
    return (in_height + 2 * padding - kernel_height) / stride + 1;
  }
  std::size_t out_width() const {
    return (in_width + 2 * padding - kernel_width) / stride + 1;
  }
  std::size_t input_size() const { return batch * in_channels * in_height * in_width; }
  std::size_t weight_size() const {
    return out_channels * in_channels * kernel_height * kernel_width;
  }
  std::size_t output_size() const { return batch * out_channels * out_height() * out_width(); }
};

/// Dense layer extents: input [rows, in_features], weight [out_features, in_features].
struct LinearGeometry {
  std::size_t rows = 1;
  std::size_t in_features = 1;
  std::size_t out_features = 1;
};

#define DRGAZE_DECLARE_KERNELS                                                              \
  template <Real T>                                                                         \
  void conv2d_forward(const ConvGeometry& g, std::span<const T> input,                      \
                      std::span<const T> weight, std::span<const T> bias, std::span<T> out); \
  template <Real T>                                                                         \
  void conv2d_backward_input(const ConvGeometry& g, std::span<const T> grad_out,            \
                             std::span<const T> weight, std::span<T> grad_in);              \
  template <Real T>                                                                         \
  void conv2d_backward_weight(const ConvGeometry& g, std::span<const T> grad_out,           \
                              std::span<const T> input, std::span<T> grad_weight);          \
  template <Real T>                                                                         \
  void conv2d_backward_bias(const ConvGeometry& g, std::span<const T> grad_out,             \
                            std::span<T> grad_bias);                                        \
  template <Real T>                                                                         \
  void linear_forward(const LinearGeometry& g, std::span<const T> input,                    \
                      std::span<const T> weight, std::span<const T> bias, std::span<T> out); \
  template <Real T>                                                                         \
  void linear_backward_input(const LinearGeometry& g, std::span<const T> grad_out,          \
                             std::span<const T> weight, std::span<T> grad_in);              \
  template <Real T>                                                                         \
  void linear_backward_weight(const LinearGeometry& g, std::span<const T> grad_out,         \
                              std::span<const T> input, std::span<T> grad_weight);          \
  template <Real T>                                                                         \
  void linear_backward_bias(const LinearGeometry& g, std::span<const T> grad_out,           \
                            std::span<T> grad_bias);

// Outputs are overwritten, not accumulated into.
namespace serial {
DRGAZE_DECLARE_KERNELS
}  // namespace serial

namespace parallel {
DRGAZE_DECLARE_KERNELS
}  // namespace parallel

#undef DRGAZE_DECLARE_KERNELS

/// Number of OpenMP threads the parallel kernels will use.
int max_threads();

}  // namespace drgaze::kernels
