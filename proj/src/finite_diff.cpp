#include "drgaze/finite_diff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace drgaze {

template <Real T>
std::vector<Tensor<T>> finite_diff_gradient(const std::function<T()>& f,
                                            std::span<Tensor<T>* const> params, T step) {
  if (!(step > T{0})) throw std::invalid_argument("finite_diff_gradient: step must be positive");
  std::vector<Tensor<T>> grads;
  grads.reserve(params.size());
  for (Tensor<T>* p : params) {
    Tensor<T> g(p->shape());
    auto values = p->data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const T saved = values[i];
      values[i] = saved + step;
      const T up = f();
      values[i] = saved - step;
      const T down = f();
      values[i] = saved;
      g[i] = (up - down) / (T{2} * step);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

template <Real T>
std::vector<Tensor<T>> finite_diff_gradient(
    const std::function<T(std::span<const Tensor<T>>)>& f, std::vector<Tensor<T>> params,
    T step) {
  std::vector<Tensor<T>*> ptrs;
  for (auto& p : params) ptrs.push_back(&p);
  const std::function<T()> bound = [&] { return f(params); };
  return finite_diff_gradient<T>(bound, std::span<Tensor<T>* const>(ptrs), step);
}

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max(1e-8, std::abs(a) + std::abs(b));
}

template std::vector<Tensor<float>> finite_diff_gradient<float>(
    const std::function<float()>&, std::span<Tensor<float>* const>, float);
template std::vector<Tensor<double>> finite_diff_gradient<double>(
    const std::function<double()>&, std::span<Tensor<double>* const>, double);
template std::vector<Tensor<float>> finite_diff_gradient<float>(
    const std::function<float(std::span<const Tensor<float>>)>&, std::vector<Tensor<float>>, float);
template std::vector<Tensor<double>> finite_diff_gradient<double>(
    const std::function<double(std::span<const Tensor<double>>)>&, std::vector<Tensor<double>>,
    double);

}  // namespace drgaze
