#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "drgaze/tensor.hpp"

// "DRGZ" binary tensor format, little-endian throughout:
//   4 bytes  magic "DRGZ"
//   1 byte   version 0x01
//   u32      rank
//   u32[rank] extents
//   f32[numel] elements, row-major
// 64-bit tensors are rounded to 32-bit floats on write.

namespace drgaze {

inline constexpr char kTensorMagic[4] = {'D', 'R', 'G', 'Z'};
inline constexpr unsigned char kTensorVersion = 0x01;

template <Real T>
void write_tensor(std::ostream& os, const Tensor<T>& t);

template <Real T>
Tensor<T> read_tensor(std::istream& is);

template <Real T>
void save_tensor(const std::filesystem::path& path, const Tensor<T>& t);

template <Real T>
Tensor<T> load_tensor(const std::filesystem::path& path);

/// Encoded size in bytes of a tensor with this shape.
std::size_t encoded_tensor_size(const Shape& shape);

}  // namespace drgaze
