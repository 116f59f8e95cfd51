#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "drgaze/tape.hpp"

// Differentiable operations. Each computes its forward value eagerly and
// records a backward rule on the tape shared by its inputs.

namespace drgaze {

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// Cross-correlation of input [N,C,H,W] with weight [O,C,kh,kw] plus a
/// per-channel bias [O], zero padding. Output [N,O,H',W'].
template <Real T>
Var<T> conv2d(Var<T> input, Var<T> weight, Var<T> bias, Conv2dOptions options = {});

/// weight·x + bias for x [n] -> [m], or row-wise for x [B,n] -> [B,m].
template <Real T>
Var<T> linear(Var<T> x, Var<T> weight, Var<T> bias);

template <Real T>
Var<T> relu(Var<T> x);

template <Real T>
Var<T> add(Var<T> a, Var<T> b);

template <Real T>
Var<T> concat(std::span<const Var<T>> parts, std::size_t axis);

template <Real T>
Var<T> reshape(Var<T> x, Shape shape);

/// Row-major linearization of axes [from_axis, rank).
template <Real T>
Var<T> flatten(Var<T> x, std::size_t from_axis = 0);

/// Sum of all elements, as a rank-0 scalar.
template <Real T>
Var<T> sum(Var<T> x);

/// Multiplies slice i of the last axis by factors[i]. The factors are constants.
template <Real T>
Var<T> scale_last_axis(Var<T> x, std::vector<T> factors);

}  // namespace drgaze
