#pragma once

// Flat binary tensor files.
//
//   bytes  "QGTENSOR"
//   u32    format version (1)
//   u32    tensor count
//   per tensor:
//     u32  name length, then the name bytes (UTF-8, no terminator)
//     u64  rows
//     u64  cols
//     f64  rows*cols values, row-major
//
// All integers and floats are little-endian. Vectors are stored as n x 1.

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "quadgen/error.hpp"

namespace quadgen {

using NamedTensor = std::pair<std::string, Eigen::MatrixXd>;

namespace detail {

template <class T>
void put_le(std::ostream& os, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
  unsigned char b[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) throw DataError("truncated tensor file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

inline constexpr char kTensorMagic[8] = {'Q', 'G', 'T', 'E', 'N', 'S', 'O', 'R'};

}  // namespace detail

inline void write_tensors(std::ostream& os, const std::vector<NamedTensor>& tensors) {
  os.write(detail::kTensorMagic, sizeof(detail::kTensorMagic));
  detail::put_le<std::uint32_t>(os, 1);
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, m] : tensors) {
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_le<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
    detail::put_le<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) detail::put_le<double>(os, m(r, c));
  }
  if (!os) throw DataError("failed writing tensor file");
}

inline std::vector<NamedTensor> read_tensors(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, detail::kTensorMagic, 8) != 0)
    throw DataError("not a tensor file (bad magic)");
  if (auto version = detail::get_le<std::uint32_t>(is); version != 1)
    throw DataError("unsupported tensor file version " + std::to_string(version));
  const auto count = detail::get_le<std::uint32_t>(is);
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = detail::get_le<std::uint32_t>(is);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw DataError("truncated tensor name");
    const auto rows = detail::get_le<std::uint64_t>(is);
    const auto cols = detail::get_le<std::uint64_t>(is);
    if (rows > (1u << 24) || cols > (1u << 24)) throw DataError("implausible tensor shape for '" + name + "'");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = detail::get_le<double>(is);
    out.emplace_back(std::move(name), std::move(m));
  }
  return out;
}

inline void save_tensors(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write '" + path + "'");
  write_tensors(os, tensors);
}

inline std::vector<NamedTensor> load_tensors(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open '" + path + "'");
  return read_tensors(is);
}

/// Looks a tensor up by name and checks its shape.
inline const Eigen::MatrixXd& find_tensor(const std::vector<NamedTensor>& ts, const std::string& name,
                                          Eigen::Index rows = -1, Eigen::Index cols = -1) {
  for (const auto& [n, m] : ts)
    if (n == name) {
      if ((rows >= 0 && m.rows() != rows) || (cols >= 0 && m.cols() != cols))
        throw DataError("tensor '" + name + "' has shape " + std::to_string(m.rows()) + "x" +
                        std::to_string(m.cols()));
      return m;
    }
  throw DataError("missing tensor '" + name + "'");
}

}  // namespace quadgen
