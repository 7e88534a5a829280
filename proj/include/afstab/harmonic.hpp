#pragma once

// Asymptotically linear harmonic coordinates u^1, u^2, u^3 on a truncated
// grid: conservative Laplace-Beltrami discretization, preconditioned CG,
// gradient and covariant Hessian post-processing.

#include <array>
#include <cmath>
#include <future>
#include <numeric>
#include <optional>
#include <vector>

#include "afstab/geometry.hpp"
#include "afstab/grid.hpp"

namespace afstab {

enum class BoundaryPolicy { Plain, Corrected };

inline std::string to_string(BoundaryPolicy p) { return p == BoundaryPolicy::Plain ? "plain" : "corrected"; }

inline BoundaryPolicy boundary_policy_from_string(const std::string& s) {
  if (s == "plain") return BoundaryPolicy::Plain;
  if (s == "corrected") return BoundaryPolicy::Corrected;
  throw InvalidArgument("unknown boundary policy '" + s + "'");
}

/// Dirichlet data on the box boundary. The corrected policy uses the exact
/// l = 1 exterior solution for phi = 1 + M/(2r):  x^i (1 - mu/r + mu^2/r^2), mu = M/2.
inline double boundary_value(const MetricChart& chart, const Vec3& x, int axis, BoundaryPolicy bc) {
  if (bc == BoundaryPolicy::Plain) return x[axis];
  const double mu = 0.5 * chart.monopole();
  const double r = x.norm();
  return x[axis] * (1.0 - mu / r + mu * mu / (r * r));
}

/// Face-averaged conservative discretization of
///   L u = (1/sqrt g) d_a (sqrt g g^{ab} d_b u)
/// for diagonal metrics. divergence() returns the h^-2-scaled flux sum
/// (sqrt g * L u), which is the symmetric part; L u = divergence / sqrt g.
class LaplaceBeltramiOperator {
 public:
  LaplaceBeltramiOperator() = default;
  LaplaceBeltramiOperator(const GridMetric& gm) : grid_(gm.grid), weight_(gm.sqrt_det) {
    for (int a = 0; a < 3; ++a) coef_[a].resize(grid_.size());
    for (size_t n = 0; n < grid_.size(); ++n)
      for (int a = 0; a < 3; ++a) coef_[a][n] = gm.sqrt_det[n] / gm.g_diag[n][a];
  }

  const Grid& grid() const { return grid_; }
  const std::vector<double>& weight() const { return weight_; }

  double face(int axis, size_t n, size_t nb) const { return 0.5 * (coef_[axis][n] + coef_[axis][nb]); }

  /// sqrt(g) * L u at an interior node.
  double divergence_at(const std::vector<double>& u, int i, int j, int k) const {
    const size_t n = grid_.index(i, j, k);
    const size_t st[3] = {1, static_cast<size_t>(grid_.n()),
                          static_cast<size_t>(grid_.n()) * grid_.n()};
    double acc = 0.0;
    for (int a = 0; a < 3; ++a) {
      const size_t p = n + st[a], m = n - st[a];
      acc += face(a, n, p) * (u[p] - u[n]) - face(a, n, m) * (u[n] - u[m]);
    }
    return acc / (grid_.h() * grid_.h());
  }

  /// Diagonal of -divergence at an interior node.
  double diagonal_at(int i, int j, int k) const {
    const size_t n = grid_.index(i, j, k);
    const size_t st[3] = {1, static_cast<size_t>(grid_.n()),
                          static_cast<size_t>(grid_.n()) * grid_.n()};
    double acc = 0.0;
    for (int a = 0; a < 3; ++a) acc += face(a, n, n + st[a]) + face(a, n, n - st[a]);
    return acc / (grid_.h() * grid_.h());
  }

  /// out = divergence(u) on interior nodes, 0 on the boundary.
  void divergence(const std::vector<double>& u, std::vector<double>& out) const {
    out.assign(grid_.size(), 0.0);
    const int n = grid_.n();
    for (int k = 1; k < n - 1; ++k)
      for (int j = 1; j < n - 1; ++j)
        for (int i = 1; i < n - 1; ++i) out[grid_.index(i, j, k)] = divergence_at(u, i, j, k);
  }

  /// L u (the Laplace-Beltrami operator itself) on interior nodes.
  std::vector<double> apply(const std::vector<double>& u) const {
    std::vector<double> out;
    divergence(u, out);
    for (size_t n = 0; n < out.size(); ++n) out[n] /= weight_[n];
    return out;
  }

 private:
  Grid grid_;
  std::array<std::vector<double>, 3> coef_;  // sqrt(g) g^{aa} at nodes
  std::vector<double> weight_;
};

inline LaplaceBeltramiOperator assemble_laplace_beltrami(const MetricChart& chart, const Grid& grid) {
  if (chart.domain.r_exc > 0.0) {
    grid.for_each_node([&](int i, int j, int k, size_t) {
      if (grid.node(i, j, k).norm() <= chart.domain.r_exc)
        throw ExcisedPoint("grid stencil touches the excised region");
    });
  }
  return LaplaceBeltramiOperator(GridMetric(chart, grid));
}

struct SolverOptions {
  double tol = 1e-10;     // relative residual
  int max_iterations = 50000;
};

struct SolveStats {
  int iterations = 0;
  double relative_residual = 0.0;
  double max_abs_operator = 0.0;  // max |L u| over interior nodes
};

namespace detail {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  // fixed-order pairwise sum for reproducibility
  std::vector<double> partial((a.size() + 1023) / 1024, 0.0);
  for (size_t blk = 0; blk < partial.size(); ++blk) {
    double s = 0.0;
    const size_t end = std::min(a.size(), (blk + 1) * 1024);
    for (size_t i = blk * 1024; i < end; ++i) s += a[i] * b[i];
    partial[blk] = s;
  }
  while (partial.size() > 1) {
    std::vector<double> next((partial.size() + 1) / 2, 0.0);
    for (size_t i = 0; i < partial.size(); ++i) next[i / 2] += partial[i];
    partial.swap(next);
  }
  return partial.empty() ? 0.0 : partial[0];
}

}  // namespace detail

/// Solves L u = 0 with u fixed on the boundary nodes; `u` carries the
/// boundary values and the interior initial guess. Jacobi-preconditioned CG
/// on the symmetric system -divergence(u) = 0.
inline SolveStats solve_dirichlet(const LaplaceBeltramiOperator& op, std::vector<double>& u,
                                  const SolverOptions& opts) {
  const Grid& g = op.grid();
  const int n = g.n();
  const size_t sz = g.size();

  std::vector<double> bc_only(sz, 0.0);
  g.for_each_node([&](int i, int j, int k, size_t idx) {
    if (g.on_boundary(i, j, k)) bc_only[idx] = u[idx];
  });
  std::vector<double> tmp;
  op.divergence(bc_only, tmp);
  const double ref = std::sqrt(detail::dot(tmp, tmp));

  std::vector<double> inv_diag(sz, 0.0);
  for (int k = 1; k < n - 1; ++k)
    for (int j = 1; j < n - 1; ++j)
      for (int i = 1; i < n - 1; ++i) inv_diag[g.index(i, j, k)] = 1.0 / op.diagonal_at(i, j, k);

  std::vector<double> r;
  op.divergence(u, r);  // residual of -div(delta) = div(u)
  std::vector<double> z(sz), p(sz), q(sz);
  for (size_t i = 0; i < sz; ++i) z[i] = r[i] * inv_diag[i];
  p = z;
  double rz = detail::dot(r, z);
  double rnorm = std::sqrt(detail::dot(r, r));

  SolveStats st;
  const double target = opts.tol * (ref > 0.0 ? ref : 1.0);
  while (rnorm > target) {
    if (st.iterations >= opts.max_iterations)
      throw SolverDiverged("PCG reached " + std::to_string(st.iterations) +
                           " iterations at relative residual " + fmt_double(rnorm / ref));
    op.divergence(p, q);
    for (auto& v : q) v = -v;
    const double pq = detail::dot(p, q);
    const double alpha = rz / pq;
    for (size_t i = 0; i < sz; ++i) {
      u[i] += alpha * p[i];
      r[i] -= alpha * q[i];
    }
    for (size_t i = 0; i < sz; ++i) z[i] = r[i] * inv_diag[i];
    const double rz_new = detail::dot(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (size_t i = 0; i < sz; ++i) p[i] = z[i] + beta * p[i];
    rnorm = std::sqrt(detail::dot(r, r));
    ++st.iterations;
    if (!std::isfinite(rnorm)) throw SolverDiverged("PCG produced a non-finite residual");
  }

  op.divergence(u, tmp);
  st.relative_residual = std::sqrt(detail::dot(tmp, tmp)) / (ref > 0.0 ? ref : 1.0);
  for (size_t i = 0; i < sz; ++i)
    st.max_abs_operator = std::max(st.max_abs_operator, std::abs(tmp[i] / op.weight()[i]));
  return st;
}

/// Solves for the harmonic coordinate asymptotic to x^{axis} (axis 0, 1, 2).
inline ScalarGridField solve_harmonic_coordinate(const MetricChart& chart, const Grid& grid, int axis,
                                                 BoundaryPolicy bc, const SolverOptions& opts = {},
                                                 SolveStats* stats = nullptr,
                                                 const LaplaceBeltramiOperator* prebuilt = nullptr) {
  if (axis < 0 || axis > 2) throw InvalidArgument("axis must be 0, 1 or 2");
  std::optional<LaplaceBeltramiOperator> local;
  if (!prebuilt) local.emplace(assemble_laplace_beltrami(chart, grid));
  const LaplaceBeltramiOperator& op = prebuilt ? *prebuilt : *local;

  ScalarGridField u(grid);
  grid.for_each_node([&](int i, int j, int k, size_t idx) {
    const Vec3 x = grid.node(i, j, k);
    u[idx] = grid.on_boundary(i, j, k) ? boundary_value(chart, x, axis, bc) : x[axis];
  });
  const SolveStats st = solve_dirichlet(op, u.values, opts);
  if (stats) *stats = st;
  return u;
}

// ---------------------------------------------------------------------------

enum class Normalization { BasePoint, AnnulusAverage };

struct TripleOptions {
  BoundaryPolicy bc = BoundaryPolicy::Corrected;
  SolverOptions solver;
  Vec3 base_point = Vec3(2.0, 0.0, 0.0);
  Normalization normalization = Normalization::BasePoint;
  double annulus_inner = 0.25;  // fractions of R_out
  double annulus_outer = 0.5;
  std::array<bool, 3> axes{true, true, true};
  int threads = 1;
};

struct HarmonicTriple {
  Grid grid;
  MetricChart chart;
  GridMetric metric;
  std::array<bool, 3> solved{false, false, false};
  std::array<ScalarGridField, 3> u;
  std::array<VectorGridField, 3> du;    // coordinate partials d_a u
  std::array<VectorGridField, 3> grad;  // g^{ab} d_b u
  std::array<SymmetricGridField, 3> hess;  // d_a d_b u - Gamma^k_ab d_k u
  std::array<double, 3> residual_norm{0, 0, 0};
  std::array<int, 3> iterations{0, 0, 0};
  Vec3 base_point = Vec3(2, 0, 0);
  bool normalized = false;
  Normalization normalization = Normalization::BasePoint;
  /// Nodes within this many layers of the boundary use reduced-order stencils.
  int boundary_layers = 2;

  bool flagged(int i, int j, int k) const { return grid.near_boundary(i, j, k, boundary_layers); }

  double grad_norm(int axis, size_t idx) const {
    const Vec3& d = du[axis].values[idx];
    return std::sqrt((d.array().square() / metric.g_diag[idx].array()).sum());
  }
  double hess_norm2(int axis, size_t idx) const {
    const Mat3 h = hess[axis].matrix(idx);
    const Vec3 gi = metric.g_inv_diag(idx);
    double s = 0.0;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) s += gi[a] * gi[b] * h(a, b) * h(a, b);
    return s;
  }
  /// g(grad u^a, grad u^b) at a node.
  double inner(int a, int b, size_t idx) const {
    return (du[a].values[idx].array() * du[b].values[idx].array() / metric.g_diag[idx].array()).sum();
  }

  double value(int axis, const Vec3& x) const { return interpolate(u[axis], x); }
  Vec3 map(const Vec3& x) const { return Vec3(value(0, x), value(1, x), value(2, x)); }
  Vec3 gradient(int axis, const Vec3& x) const { return interpolate(grad[axis], x); }
};

/// Gradient, raised gradient and covariant Hessian of a solved field.
inline void differentiate(HarmonicTriple& t, int axis) {
  const Grid& g = t.grid;
  const auto& f = t.u[axis].values;
  std::array<std::vector<double>, 3> d;
  for (int a = 0; a < 3; ++a) d[a] = fd::partial(g, f, a);
  std::array<std::vector<double>, 3> dd;
  for (int a = 0; a < 3; ++a) dd[a] = fd::second_partial(g, f, a);
  // mixed partials by composing first differences, symmetrized
  auto mixed = [&](int a, int b) {
    auto ab = fd::partial(g, d[b], a);
    auto ba = fd::partial(g, d[a], b);
    for (size_t i = 0; i < ab.size(); ++i) ab[i] = 0.5 * (ab[i] + ba[i]);
    return ab;
  };
  const auto dxy = mixed(0, 1), dxz = mixed(0, 2), dyz = mixed(1, 2);

  t.du[axis] = VectorGridField(g);
  t.grad[axis] = VectorGridField(g);
  t.hess[axis] = SymmetricGridField(g);
  g.for_each_node([&](int i, int j, int k, size_t idx) {
    const Vec3 du(d[0][idx], d[1][idx], d[2][idx]);
    t.du[axis].values[idx] = du;
    t.grad[axis].values[idx] = du.cwiseQuotient(t.metric.g_diag[idx]);
    Mat3 h;
    h << dd[0][idx], dxy[idx], dxz[idx], dxy[idx], dd[1][idx], dyz[idx], dxz[idx], dyz[idx], dd[2][idx];
    const Tensor3 gam = christoffel_at(t.chart, g.node(i, j, k));
    for (int c = 0; c < 3; ++c) h -= gam[c] * du[c];
    t.hess[axis].set(idx, h);
  });
}

/// Average of u over the chart annulus r0 <= |x| <= r1 with sqrt(g) weights.
inline double annulus_average(const ScalarGridField& u, const GridMetric& gm, double r0, double r1) {
  double num = 0.0, den = 0.0;
  u.grid.for_each_node([&](int i, int j, int k, size_t idx) {
    const double r = u.grid.node(i, j, k).norm();
    if (r >= r0 && r <= r1) {
      num += gm.sqrt_det[idx] * u[idx];
      den += gm.sqrt_det[idx];
    }
  });
  return den > 0.0 ? num / den : 0.0;
}

inline HarmonicTriple build_harmonic_triple(const MetricChart& chart, const Grid& grid,
                                            const TripleOptions& opts = {}) {
  HarmonicTriple t;
  t.grid = grid;
  t.chart = chart;
  t.metric = GridMetric(chart, grid);
  t.base_point = opts.base_point;
  t.normalization = opts.normalization;
  if (!grid.contains(opts.base_point)) throw OutOfDomain("base point outside the grid");
  if (chart.domain.r_exc > 0.0) assemble_laplace_beltrami(chart, grid);  // excision check
  const LaplaceBeltramiOperator op(t.metric);

  auto solve_one = [&](int a) {
    SolveStats st;
    auto u = solve_harmonic_coordinate(chart, grid, a, opts.bc, opts.solver, &st, &op);
    return std::make_pair(std::move(u), st);
  };
  std::array<std::optional<std::future<std::pair<ScalarGridField, SolveStats>>>, 3> jobs;
  for (int a = 0; a < 3; ++a) {
    if (!opts.axes[a]) continue;
    jobs[a] = std::async(opts.threads > 1 ? std::launch::async : std::launch::deferred, solve_one, a);
  }
  for (int a = 0; a < 3; ++a) {
    if (!jobs[a]) continue;
    auto [u, st] = jobs[a]->get();
    t.u[a] = std::move(u);
    t.residual_norm[a] = st.relative_residual;
    t.iterations[a] = st.iterations;
    t.solved[a] = true;
  }

  for (int a = 0; a < 3; ++a) {
    if (!t.solved[a]) continue;
    const double shift =
        opts.normalization == Normalization::BasePoint
            ? interpolate(t.u[a], opts.base_point)
            : annulus_average(t.u[a], t.metric, opts.annulus_inner * grid.r_out(),
                              opts.annulus_outer * grid.r_out());
    for (auto& v : t.u[a].values) v -= shift;
    differentiate(t, a);
  }
  t.normalized = true;
  return t;
}

inline bool same_chart(const MetricChart& a, const MetricChart& b) {
  if (a.family != b.family || a.params != b.params || a.bumps.size() != b.bumps.size()) return false;
  for (size_t i = 0; i < a.bumps.size(); ++i) {
    const auto &x = a.bumps[i], &y = b.bumps[i];
    if (x.shape != y.shape || x.amplitude != y.amplitude || x.width != y.width || x.center != y.center)
      return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Diagnostics

/// sup_{B_r(c)} |grad u| / sup_{B_2r(c)} |u - u(c)| over chart balls.
inline double cheng_yau_ratio(const HarmonicTriple& t, int axis, const Vec3& center, double r) {
  const double uc = t.value(axis, center);
  double gsup = 0.0, usup = 0.0;
  t.grid.for_each_node([&](int i, int j, int k, size_t idx) {
    const double d = (t.grid.node(i, j, k) - center).norm();
    if (d <= r) gsup = std::max(gsup, t.grad_norm(axis, idx));
    if (d <= 2 * r) usup = std::max(usup, std::abs(t.u[axis][idx] - uc));
  });
  return usup > 0.0 ? gsup / usup : std::numeric_limits<double>::infinity();
}

/// Fit of sup_{|x| = r} |grad u^i - d_{x^i}|_g ~ C r^{-p} over shells; returns p
/// (infinite when the deviation vanishes identically).
inline double gradient_decay_exponent(const HarmonicTriple& t, int axis, const std::vector<double>& radii) {
  const double band = 0.5 * t.grid.h();
  std::vector<double> lr, ls;
  for (double r : radii) {
    double sup = 0.0;
    t.grid.for_each_node([&](int i, int j, int k, size_t idx) {
      if (t.flagged(i, j, k)) return;
      if (std::abs(t.grid.node(i, j, k).norm() - r) > band) return;
      Vec3 d = t.grad[axis].values[idx];
      d[axis] -= 1.0;
      sup = std::max(sup, std::sqrt((d.array().square() * t.metric.g_diag[idx].array()).sum()));
    });
    if (sup > 0.0) {
      lr.push_back(std::log(r));
      ls.push_back(std::log(sup));
    }
  }
  if (lr.size() < 2) return std::numeric_limits<double>::infinity();
  const double n = static_cast<double>(lr.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < lr.size(); ++i) {
    sx += lr[i];
    sy += ls[i];
    sxx += lr[i] * lr[i];
    sxy += lr[i] * ls[i];
  }
  return -(n * sxy - sx * sy) / (n * sxx - sx * sx);
}

inline json field_sidecar(const ScalarGridField& f, const MetricChart& chart, int axis,
                          BoundaryPolicy bc) {
  json j;
  j["format"] = "afstab-field-v1";
  j["N"] = f.grid.n();
  j["R_out"] = f.grid.r_out();
  j["axis_order"] = "xyz";
  j["component"] = axis + 1;
  j["boundary_policy"] = to_string(bc);
  j["family"] = to_string(chart.family);
  json params = json::object();
  for (const auto& [k, v] : chart.params) params[k] = v;
  j["params"] = params;
  return j;
}

}  // namespace afstab
