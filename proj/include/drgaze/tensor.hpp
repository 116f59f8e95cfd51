#pragma once

#include <concepts>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace drgaze {

/// Element types a tensor store may hold: 32-bit for training, 64-bit for
/// gradient verification.
template <typename T>
concept Real = std::same_as<T, float> || std::same_as<T, double>;

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major N-dimensional array.
template <Real T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<T> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, T value);
  static Tensor vector(std::initializer_list<T> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  const std::vector<T>& values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  T operator[](std::size_t i) const { return data_[i]; }

  /// Same elements under a new shape with equal element count.
  Tensor reshaped(Shape shape) const;

  template <Real U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

/// Joins parts along `axis`; every other extent must agree.
template <Real T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis);

/// Inverse of concat: cuts `x` along `axis` into pieces of the given sizes.
template <Real T>
std::vector<Tensor<T>> split(const Tensor<T>& x, std::size_t axis,
                             std::span<const std::size_t> sizes);

/// Collapses axes [from_axis, rank) into one.
template <Real T>
Tensor<T> flatten(const Tensor<T>& x, std::size_t from_axis = 0);

}  // namespace drgaze
