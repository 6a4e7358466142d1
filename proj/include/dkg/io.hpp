// Snapshot binary format and CSV slice export.
//
// Binary layout (little-endian):
//   int64   n            points per axis
//   float64 L            box half-length
//   int64   components   1 = real scalar samples, 4 = complex spinor samples
//   float64 t            time stamp
// followed by n^4 samples in row-major order (x_1 slowest). A scalar sample is
// one float64; a spinor sample is 4 components, each (re, im) as float64.
#pragma once

#include "dkg/field.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dkg {

namespace detail {

template <class T>
void put_le(std::vector<char>& buf, T v) {
  static_assert(sizeof(T) == 8);
  char bytes[8];
  std::memcpy(bytes, &v, 8);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + 8);
  buf.insert(buf.end(), bytes, bytes + 8);
}

template <class T>
T get_le(const char* p) {
  static_assert(sizeof(T) == 8);
  char bytes[8];
  std::memcpy(bytes, p, 8);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + 8);
  T v;
  std::memcpy(&v, bytes, 8);
  return v;
}

}  // namespace detail

struct SnapshotHeader {
  std::int64_t n = 0;
  double half_length = 0.0;
  std::int64_t components = 0;
  double time = 0.0;
};

template <class T, int C>
std::vector<char> encode_snapshot(const Field<T, C>& f, double time) {
  static_assert((C == 1 && std::is_same_v<T, double>) || (C == 4 && is_complex_v<T>),
                "snapshots hold real scalars or complex spinors");
  std::vector<char> buf;
  const std::size_t np = f.points();
  buf.reserve(32 + np * C * sizeof(T));
  detail::put_le<std::int64_t>(buf, f.grid().n());
  detail::put_le<double>(buf, f.grid().half_length());
  detail::put_le<std::int64_t>(buf, C);
  detail::put_le<double>(buf, time);
  for (std::size_t p = 0; p < np; ++p) {
    for (int c = 0; c < C; ++c) {
      if constexpr (is_complex_v<T>) {
        detail::put_le<double>(buf, f(p, c).real());
        detail::put_le<double>(buf, f(p, c).imag());
      } else {
        detail::put_le<double>(buf, f(p, c));
      }
    }
  }
  return buf;
}

template <class T, int C>
void write_snapshot(const std::string& path, const Field<T, C>& f, double time) {
  const auto buf = encode_snapshot(f, time);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline SnapshotHeader read_snapshot_header(const std::vector<char>& buf) {
  if (buf.size() < 32) throw std::runtime_error("snapshot: truncated header");
  SnapshotHeader h;
  h.n = detail::get_le<std::int64_t>(buf.data());
  h.half_length = detail::get_le<double>(buf.data() + 8);
  h.components = detail::get_le<std::int64_t>(buf.data() + 16);
  h.time = detail::get_le<double>(buf.data() + 24);
  return h;
}

inline std::vector<char> read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

/// Decodes a snapshot of the given field type; throws on header/type mismatch.
template <class T, int C>
Field<T, C> decode_snapshot(const std::vector<char>& buf, double* time = nullptr) {
  const auto h = read_snapshot_header(buf);
  if (h.components != C) throw std::runtime_error("snapshot: component count mismatch");
  const Grid g(static_cast<int>(h.n), h.half_length);
  Field<T, C> f(g);
  const std::size_t per = is_complex_v<T> ? 16 : 8;
  if (buf.size() != 32 + g.points() * C * per) throw std::runtime_error("snapshot: size mismatch");
  const char* p = buf.data() + 32;
  for (std::size_t i = 0; i < g.points(); ++i) {
    for (int c = 0; c < C; ++c) {
      if constexpr (is_complex_v<T>) {
        f(i, c) = cplx(detail::get_le<double>(p), detail::get_le<double>(p + 8));
        p += 16;
      } else {
        f(i, c) = detail::get_le<double>(p);
        p += 8;
      }
    }
  }
  if (time) *time = h.time;
  return f;
}

template <class T, int C>
Field<T, C> read_snapshot(const std::string& path, double* time = nullptr) {
  return decode_snapshot<T, C>(read_file(path), time);
}

/// Line through the box centre along axis a (1..4): columns x, |f|, then
/// value (scalars) or re/im per component (spinors).
template <class T, int C>
void write_slice_csv(std::ostream& os, const Field<T, C>& f, int axis) {
  const Grid& g = f.grid();
  const int mid = g.n() / 2;
  os << std::setprecision(17);
  os << "x,modulus";
  if constexpr (is_complex_v<T>) {
    for (int c = 0; c < C; ++c) os << ",re" << c << ",im" << c;
  } else {
    os << ",value";
  }
  os << '\n';
  for (int j = 0; j < g.n(); ++j) {
    std::array<int, 4> idx{mid, mid, mid, mid};
    idx[axis - 1] = j;
    const std::size_t p = g.flat(idx[0], idx[1], idx[2], idx[3]);
    os << g.coord(j) << ',' << modulus(f, p);
    for (int c = 0; c < C; ++c) {
      if constexpr (is_complex_v<T>)
        os << ',' << f(p, c).real() << ',' << f(p, c).imag();
      else
        os << ',' << f(p, c);
    }
    os << '\n';
  }
}

}  // namespace dkg
