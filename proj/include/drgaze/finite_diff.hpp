#pragma once

#include <functional>
#include <span>
#include <vector>

#include "drgaze/tensor.hpp"

namespace drgaze {

/// Central-difference gradient of the scalar `f` with respect to every element
/// of every tensor in `params`. `f` must read the tensors through the given
/// pointers; each element is perturbed in place and restored bit-exactly.
template <Real T>
std::vector<Tensor<T>> finite_diff_gradient(const std::function<T()>& f,
                                            std::span<Tensor<T>* const> params, T step);

/// Same, for a function of explicit parameter values.
template <Real T>
std::vector<Tensor<T>> finite_diff_gradient(
    const std::function<T(std::span<const Tensor<T>>)>& f, std::vector<Tensor<T>> params, T step);

/// |a-b| / max(1e-8, |a|+|b|)
double relative_error(double a, double b);

}  // namespace drgaze
