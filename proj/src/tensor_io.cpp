#include "drgaze/tensor_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "drgaze/errors.hpp"

namespace drgaze {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xffu), static_cast<char>((v >> 8) & 0xffu),
                         static_cast<char>((v >> 16) & 0xffu),
                         static_cast<char>((v >> 24) & 0xffu)};
  os.write(bytes, 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char bytes[4];
  if (!is.read(reinterpret_cast<char*>(bytes), 4)) throw FormatError("DRGZ: truncated header");
  return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
         (static_cast<std::uint32_t>(bytes[2]) << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
}

constexpr std::uint32_t kMaxRank = 16;

}  // namespace

std::size_t encoded_tensor_size(const Shape& shape) {
  return 4 + 1 + 4 + 4 * shape.size() + 4 * shape_numel(shape);
}

template <Real T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
  os.write(kTensorMagic, 4);
  os.put(static_cast<char>(kTensorVersion));
  put_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.shape()) put_u32(os, static_cast<std::uint32_t>(e));
  std::string buf(4 * t.numel(), '\0');
  std::size_t k = 0;
  for (T v : t.data()) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    buf[k++] = static_cast<char>(bits & 0xffu);
    buf[k++] = static_cast<char>((bits >> 8) & 0xffu);
    buf[k++] = static_cast<char>((bits >> 16) & 0xffu);
    buf[k++] = static_cast<char>((bits >> 24) & 0xffu);
  }
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!os) throw FormatError("DRGZ: write failed");
}

template <Real T>
Tensor<T> read_tensor(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kTensorMagic, 4) != 0) {
    throw FormatError("DRGZ: bad magic");
  }
  const int version = is.get();
  if (version != kTensorVersion) {
    throw FormatError("DRGZ: unsupported version " + std::to_string(version));
  }
  const std::uint32_t rank = get_u32(is);
  if (rank > kMaxRank) throw FormatError("DRGZ: implausible rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& e : shape) {
    e = get_u32(is);
    if (e == 0) throw FormatError("DRGZ: zero extent");
  }
  const std::size_t n = shape_numel(shape);
  std::string buf(4 * n, '\0');
  if (!is.read(buf.data(), static_cast<std::streamsize>(buf.size()))) {
    throw FormatError("DRGZ: truncated data for shape " + shape_string(shape));
  }
  std::vector<T> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto* b = reinterpret_cast<const unsigned char*>(buf.data() + 4 * i);
    const std::uint32_t bits = static_cast<std::uint32_t>(b[0]) |
                               (static_cast<std::uint32_t>(b[1]) << 8) |
                               (static_cast<std::uint32_t>(b[2]) << 16) |
                               (static_cast<std::uint32_t>(b[3]) << 24);
    values[i] = static_cast<T>(std::bit_cast<float>(bits));
  }
  return Tensor<T>(std::move(shape), std::move(values));
}

template <Real T>
void save_tensor(const std::filesystem::path& path, const Tensor<T>& t) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  write_tensor(os, t);
}

template <Real T>
Tensor<T> load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  try {
    return read_tensor<T>(is);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

template void write_tensor<float>(std::ostream&, const Tensor<float>&);
template void write_tensor<double>(std::ostream&, const Tensor<double>&);
template Tensor<float> read_tensor<float>(std::istream&);
template Tensor<double> read_tensor<double>(std::istream&);
template void save_tensor<float>(const std::filesystem::path&, const Tensor<float>&);
template void save_tensor<double>(const std::filesystem::path&, const Tensor<double>&);
template Tensor<float> load_tensor<float>(const std::filesystem::path&);
template Tensor<double> load_tensor<double>(const std::filesystem::path&);

}  // namespace drgaze
