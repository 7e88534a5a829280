#pragma once

// Structured Cartesian grid on [-R_out, R_out]^3, node-centred fields,
// interpolation and finite-difference derivatives.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "afstab/errors.hpp"
#include "afstab/geometry.hpp"
#include "afstab/io.hpp"

namespace afstab {

class Grid {
 public:
  Grid() = default;
  Grid(int n, double r_out) : n_(n), r_out_(r_out) {
    if (n < 17 || n % 2 == 0) throw InvalidArgument("grid node count must be odd and >= 17");
    if (!(r_out > 0.0)) throw InvalidArgument("grid half-width must be positive");
    h_ = 2.0 * r_out / (n - 1);
  }

  int n() const { return n_; }
  double r_out() const { return r_out_; }
  double h() const { return h_; }
  size_t size() const { return static_cast<size_t>(n_) * n_ * n_; }

  /// x-fastest linear index
  size_t index(int i, int j, int k) const {
    return static_cast<size_t>(i) + static_cast<size_t>(n_) * (j + static_cast<size_t>(n_) * k);
  }
  double coord(int i) const { return -r_out_ + i * h_; }
  Vec3 node(int i, int j, int k) const { return Vec3(coord(i), coord(j), coord(k)); }
  Vec3 node(size_t idx) const {
    const int i = static_cast<int>(idx % n_);
    const int j = static_cast<int>((idx / n_) % n_);
    const int k = static_cast<int>(idx / (static_cast<size_t>(n_) * n_));
    return node(i, j, k);
  }

  bool on_boundary(int i, int j, int k) const {
    return i == 0 || j == 0 || k == 0 || i == n_ - 1 || j == n_ - 1 || k == n_ - 1;
  }
  /// Within `layers` nodes of the boundary.
  bool near_boundary(int i, int j, int k, int layers) const {
    return i < layers || j < layers || k < layers || i >= n_ - layers || j >= n_ - layers ||
           k >= n_ - layers;
  }
  bool contains(const Vec3& x) const {
    const double lim = r_out_ * (1.0 + 1e-12);
    return std::abs(x.x()) <= lim && std::abs(x.y()) <= lim && std::abs(x.z()) <= lim;
  }

  bool operator==(const Grid& o) const { return n_ == o.n_ && r_out_ == o.r_out_; }

  template <class F>
  void for_each_node(F&& f) const {
    for (int k = 0; k < n_; ++k)
      for (int j = 0; j < n_; ++j)
        for (int i = 0; i < n_; ++i) f(i, j, k, index(i, j, k));
  }

 private:
  int n_ = 0;
  double r_out_ = 0.0;
  double h_ = 0.0;
};

struct ScalarGridField {
  Grid grid;
  std::vector<double> values;

  ScalarGridField() = default;
  explicit ScalarGridField(const Grid& g, double fill = 0.0) : grid(g), values(g.size(), fill) {}

  double& operator[](size_t i) { return values[i]; }
  double operator[](size_t i) const { return values[i]; }
  double& at(int i, int j, int k) { return values[grid.index(i, j, k)]; }
  double at(int i, int j, int k) const { return values[grid.index(i, j, k)]; }
};

struct VectorGridField {
  Grid grid;
  std::vector<Vec3> values;

  VectorGridField() = default;
  explicit VectorGridField(const Grid& g) : grid(g), values(g.size(), Vec3::Zero()) {}
};

/// Symmetric 3x3 per node, stored as (xx, yy, zz, xy, xz, yz).
struct SymmetricGridField {
  Grid grid;
  std::vector<std::array<double, 6>> values;

  SymmetricGridField() = default;
  explicit SymmetricGridField(const Grid& g) : grid(g), values(g.size(), {0, 0, 0, 0, 0, 0}) {}

  Mat3 matrix(size_t idx) const {
    const auto& v = values[idx];
    Mat3 m;
    m << v[0], v[3], v[4], v[3], v[1], v[5], v[4], v[5], v[2];
    return m;
  }
  void set(size_t idx, const Mat3& m) {
    values[idx] = {m(0, 0), m(1, 1), m(2, 2), 0.5 * (m(0, 1) + m(1, 0)), 0.5 * (m(0, 2) + m(2, 0)),
                   0.5 * (m(1, 2) + m(2, 1))};
  }
};

// ---------------------------------------------------------------------------
// Interpolation

namespace detail {

struct Stencil1D {
  int base;
  std::array<double, 4> w;
};

// Cubic Lagrange weights on nodes base..base+3 (clamped inside the grid).
inline Stencil1D cubic_stencil(const Grid& g, double x) {
  const double s = (x + g.r_out()) / g.h();
  int base = static_cast<int>(std::floor(s)) - 1;
  base = std::clamp(base, 0, g.n() - 4);
  const double t = s - base;  // in [0, 3] away from the edges
  Stencil1D st;
  st.base = base;
  st.w[0] = -(t - 1) * (t - 2) * (t - 3) / 6.0;
  st.w[1] = t * (t - 2) * (t - 3) / 2.0;
  st.w[2] = -t * (t - 1) * (t - 3) / 2.0;
  st.w[3] = t * (t - 1) * (t - 2) / 6.0;
  return st;
}

}  // namespace detail

/// Tricubic (Lagrange) interpolation; exact for polynomials of degree <= 3 per axis.
template <class T, class Get>
T interpolate_cubic(const Grid& g, const Vec3& x, Get&& get, T zero) {
  if (!g.contains(x)) throw OutOfDomain("interpolation point outside the grid");
  const auto sx = detail::cubic_stencil(g, x.x());
  const auto sy = detail::cubic_stencil(g, x.y());
  const auto sz = detail::cubic_stencil(g, x.z());
  T acc = zero;
  for (int c = 0; c < 4; ++c)
    for (int b = 0; b < 4; ++b) {
      const double wyz = sy.w[b] * sz.w[c];
      for (int a = 0; a < 4; ++a)
        acc += (sx.w[a] * wyz) * get(g.index(sx.base + a, sy.base + b, sz.base + c));
    }
  return acc;
}

inline double interpolate(const ScalarGridField& f, const Vec3& x) {
  return interpolate_cubic<double>(f.grid, x, [&](size_t i) { return f.values[i]; }, 0.0);
}

inline Vec3 interpolate(const VectorGridField& f, const Vec3& x) {
  return interpolate_cubic<Vec3>(f.grid, x, [&](size_t i) { return f.values[i]; }, Vec3::Zero());
}

inline double interpolate_trilinear(const ScalarGridField& f, const Vec3& x) {
  const Grid& g = f.grid;
  if (!g.contains(x)) throw OutOfDomain("interpolation point outside the grid");
  std::array<int, 3> i0;
  std::array<double, 3> t;
  for (int a = 0; a < 3; ++a) {
    const double s = (x[a] + g.r_out()) / g.h();
    i0[a] = std::clamp(static_cast<int>(std::floor(s)), 0, g.n() - 2);
    t[a] = s - i0[a];
  }
  double acc = 0.0;
  for (int c = 0; c < 2; ++c)
    for (int b = 0; b < 2; ++b)
      for (int a = 0; a < 2; ++a) {
        const double w = (a ? t[0] : 1 - t[0]) * (b ? t[1] : 1 - t[1]) * (c ? t[2] : 1 - t[2]);
        acc += w * f.values[g.index(i0[0] + a, i0[1] + b, i0[2] + c)];
      }
  return acc;
}

// ---------------------------------------------------------------------------
/// Sum in a fixed block/tree order, independent of how terms were produced.
inline double pairwise_sum(const std::vector<double>& v) {
  std::vector<double> partial((v.size() + 1023) / 1024, 0.0);
  for (size_t blk = 0; blk < partial.size(); ++blk) {
    const size_t end = std::min(v.size(), (blk + 1) * 1024);
    for (size_t i = blk * 1024; i < end; ++i) partial[blk] += v[i];
  }
  while (partial.size() > 1) {
    std::vector<double> next((partial.size() + 1) / 2, 0.0);
    for (size_t i = 0; i < partial.size(); ++i) next[i / 2] += partial[i];
    partial.swap(next);
  }
  return partial.empty() ? 0.0 : partial[0];
}

// ---------------------------------------------------------------------------
// Finite differences: 4th-order central where the 5-point stencil fits,
// 2nd-order central one node in, 2nd-order one-sided on the boundary.

namespace fd {

template <class Get>
double d1(const Grid& g, int i, Get&& at) {
  const int n = g.n();
  const double h = g.h();
  if (i >= 2 && i <= n - 3) return (-at(i + 2) + 8 * at(i + 1) - 8 * at(i - 1) + at(i - 2)) / (12 * h);
  if (i >= 1 && i <= n - 2) return (at(i + 1) - at(i - 1)) / (2 * h);
  if (i == 0) return (-3 * at(0) + 4 * at(1) - at(2)) / (2 * h);
  return (3 * at(n - 1) - 4 * at(n - 2) + at(n - 3)) / (2 * h);
}

template <class Get>
double d2(const Grid& g, int i, Get&& at) {
  const int n = g.n();
  const double h2 = g.h() * g.h();
  if (i >= 2 && i <= n - 3)
    return (-at(i + 2) + 16 * at(i + 1) - 30 * at(i) + 16 * at(i - 1) - at(i - 2)) / (12 * h2);
  if (i >= 1 && i <= n - 2) return (at(i + 1) - 2 * at(i) + at(i - 1)) / h2;
  if (i == 0) return (2 * at(0) - 5 * at(1) + 4 * at(2) - at(3)) / h2;
  return (2 * at(n - 1) - 5 * at(n - 2) + 4 * at(n - 3) - at(n - 4)) / h2;
}

/// Partial derivative along `axis` of a node field.
inline std::vector<double> partial(const Grid& g, const std::vector<double>& f, int axis) {
  std::vector<double> out(g.size());
  g.for_each_node([&](int i, int j, int k, size_t idx) {
    std::array<int, 3> c{i, j, k};
    out[idx] = d1(g, c[axis], [&](int m) {
      std::array<int, 3> q = c;
      q[axis] = m;
      return f[g.index(q[0], q[1], q[2])];
    });
  });
  return out;
}

inline std::vector<double> second_partial(const Grid& g, const std::vector<double>& f, int axis) {
  std::vector<double> out(g.size());
  g.for_each_node([&](int i, int j, int k, size_t idx) {
    std::array<int, 3> c{i, j, k};
    out[idx] = d2(g, c[axis], [&](int m) {
      std::array<int, 3> q = c;
      q[axis] = m;
      return f[g.index(q[0], q[1], q[2])];
    });
  });
  return out;
}

}  // namespace fd

// ---------------------------------------------------------------------------
// Metric sampled at nodes. The grid solvers need a diagonal metric (true for
// every conformally flat family).

struct GridMetric {
  Grid grid;
  std::vector<Vec3> g_diag;     // g_aa
  std::vector<double> sqrt_det;  // sqrt(det g)

  GridMetric() = default;
  GridMetric(const MetricChart& chart, const Grid& grid) : grid(grid) {
    if (grid.r_out() > chart.domain.r_out) throw OutOfDomain("grid box exceeds the chart box");
    g_diag.resize(grid.size());
    sqrt_det.resize(grid.size());
    grid.for_each_node([&](int i, int j, int k, size_t idx) {
      const Vec3 x = grid.node(i, j, k);
      const Mat3 g = metric_at(chart, x).g;
      const double off = std::max({std::abs(g(0, 1)), std::abs(g(0, 2)), std::abs(g(1, 2))});
      if (off > 1e-14 * g.diagonal().maxCoeff())
        throw InvalidArgument("grid discretization requires a diagonal metric");
      g_diag[idx] = g.diagonal();
      sqrt_det[idx] = std::sqrt(g(0, 0) * g(1, 1) * g(2, 2));
    });
  }

  Vec3 g_inv_diag(size_t idx) const { return g_diag[idx].cwiseInverse(); }
};

// ---------------------------------------------------------------------------
// Binary field format: 8-byte magic "AFSTABF1", uint64 N, float64 R_out,
// 8-byte axis-order tag "xyz\0\0\0\0\0" (x fastest), then N^3 float64 values;
// all little-endian.

inline constexpr char kFieldMagic[8] = {'A', 'F', 'S', 'T', 'A', 'B', 'F', '1'};
inline constexpr char kAxisOrder[8] = {'x', 'y', 'z', 0, 0, 0, 0, 0};

namespace detail {

template <class T>
void put_le(std::string& out, T v) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts unsupported");
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T get_le(const std::string& in, size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw Error("truncated field file");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace detail

inline std::string encode_field(const ScalarGridField& f) {
  std::string out(kFieldMagic, 8);
  detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(f.grid.n()));
  detail::put_le<double>(out, f.grid.r_out());
  out.append(kAxisOrder, 8);
  out.reserve(out.size() + 8 * f.values.size());
  for (double v : f.values) detail::put_le<double>(out, v);
  return out;
}

inline ScalarGridField decode_field(const std::string& bytes) {
  if (bytes.size() < 32 || std::memcmp(bytes.data(), kFieldMagic, 8) != 0)
    throw Error("not an afstab field file");
  size_t pos = 8;
  const auto n = detail::get_le<std::uint64_t>(bytes, pos);
  const double r = detail::get_le<double>(bytes, pos);
  if (std::memcmp(bytes.data() + pos, kAxisOrder, 8) != 0) throw Error("unsupported axis order");
  pos += 8;
  ScalarGridField f(Grid(static_cast<int>(n), r));
  if (bytes.size() != pos + 8 * f.values.size()) throw Error("field payload size mismatch");
  for (auto& v : f.values) v = detail::get_le<double>(bytes, pos);
  return f;
}

/// Samples along the line through the origin in direction `axis`.
inline CsvTable line_probe(const ScalarGridField& f, int axis, const std::string& name = "u") {
  CsvTable t({"s", "x", "y", "z", name});
  const Grid& g = f.grid;
  const int c = g.n() / 2;
  for (int m = 0; m < g.n(); ++m) {
    std::array<int, 3> q{c, c, c};
    q[axis] = m;
    const Vec3 x = g.node(q[0], q[1], q[2]);
    t.row({fmt_double(x[axis]), fmt_double(x.x()), fmt_double(x.y()), fmt_double(x.z()),
           fmt_double(f.at(q[0], q[1], q[2]))});
  }
  return t;
}

}  // namespace afstab
