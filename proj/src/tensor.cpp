#include "drgaze/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "drgaze/errors.hpp"

namespace drgaze {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_extents(const Shape& shape) {
  for (auto e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_string(shape));
  }
}

}  // namespace

template <Real T>
Tensor<T>::Tensor(Shape shape) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(shape_numel(shape_), T{0});
}

template <Real T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  check_extents(shape_);
  if (shape_numel(shape_) != data_.size()) {
    throw ShapeError("shape " + shape_string(shape_) + " needs " +
                     std::to_string(shape_numel(shape_)) + " elements, got " +
                     std::to_string(data_.size()));
  }
}

template <Real T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

template <Real T>
Tensor<T> Tensor<T>::vector(std::initializer_list<T> values) {
  return Tensor({values.size()}, std::vector<T>(values));
}

template <Real T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

template <Real T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat needs at least one part");
  const Shape& ref = parts[0].shape();
  if (axis >= ref.size()) {
    throw ShapeError("concat axis " + std::to_string(axis) + " out of range for " +
                     shape_string(ref));
  }
  Shape out_shape = ref;
  out_shape[axis] = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Shape& s = parts[p].shape();
    bool ok = s.size() == ref.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) {
      if (d != axis && s[d] != ref[d]) ok = false;
    }
    if (!ok) {
      throw ShapeError("concat part " + std::to_string(p) + " has shape " + shape_string(s) +
                       ", incompatible with part 0 shape " + shape_string(ref) +
                       " along axis " + std::to_string(axis));
    }
    out_shape[axis] += s[axis];
  }

  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= ref[d];
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < ref.size(); ++d) inner *= ref[d];

  Tensor<T> out(out_shape);
  T* dst = out.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (const auto& part : parts) {
      const std::size_t chunk = part.shape()[axis] * inner;
      const T* src = part.data().data() + o * chunk;
      dst = std::copy(src, src + chunk, dst);
    }
  }
  return out;
}

template <Real T>
std::vector<Tensor<T>> split(const Tensor<T>& x, std::size_t axis,
                             std::span<const std::size_t> sizes) {
  const Shape& shape = x.shape();
  if (axis >= shape.size()) throw ShapeError("split axis out of range for " + shape_string(shape));
  const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  if (total != shape[axis]) {
    throw ShapeError("split sizes sum to " + std::to_string(total) + " but axis " +
                     std::to_string(axis) + " of " + shape_string(shape) + " has extent " +
                     std::to_string(shape[axis]));
  }
  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= shape[d];
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < shape.size(); ++d) inner *= shape[d];

  std::vector<Tensor<T>> out;
  out.reserve(sizes.size());
  for (auto sz : sizes) {
    Shape s = shape;
    s[axis] = sz;
    out.emplace_back(s);
  }
  const T* src = x.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t p = 0; p < sizes.size(); ++p) {
      const std::size_t chunk = sizes[p] * inner;
      std::copy(src, src + chunk, out[p].data().data() + o * chunk);
      src += chunk;
    }
  }
  return out;
}

template <Real T>
Tensor<T> flatten(const Tensor<T>& x, std::size_t from_axis) {
  const Shape& shape = x.shape();
  if (from_axis >= shape.size()) return x;
  Shape out(shape.begin(), shape.begin() + static_cast<std::ptrdiff_t>(from_axis));
  std::size_t tail = 1;
  for (std::size_t d = from_axis; d < shape.size(); ++d) tail *= shape[d];
  out.push_back(tail);
  return x.reshaped(std::move(out));
}

#define DRGAZE_INSTANTIATE(T)                                                            \
  template class Tensor<T>;                                                              \
  template Tensor<T> concat<T>(std::span<const Tensor<T>>, std::size_t);                 \
  template std::vector<Tensor<T>> split<T>(const Tensor<T>&, std::size_t,                \
                                           std::span<const std::size_t>);                \
  template Tensor<T> flatten<T>(const Tensor<T>&, std::size_t);

DRGAZE_INSTANTIATE(float)
DRGAZE_INSTANTIATE(double)

#undef DRGAZE_INSTANTIATE

}  // namespace drgaze
