#pragma once

// Geodesics, distances by shooting, the segment functional, level-set
// projections and ball-volume ratios.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <vector>

#include "afstab/fast_marching.hpp"
#include "afstab/harmonic.hpp"
#include "afstab/ode.hpp"
#include "afstab/rng.hpp"

namespace afstab {

enum class PathMethod { Shooting, GraphSeedShooting };

inline std::string to_string(PathMethod m) {
  return m == PathMethod::Shooting ? "Shooting" : "GraphSeed+Shooting";
}

struct GeodesicPath {
  std::vector<Vec3> nodes;     // uniform in arclength
  std::vector<Vec3> tangents;  // unit g-speed
  double length = 0.0;
  double endpoint_residual = 0.0;
  double speed_drift = 0.0;
  PathMethod method = PathMethod::Shooting;

  /// Cubic Hermite position at arclength s.
  Vec3 at(double s) const {
    if (nodes.size() == 1) return nodes[0];
    const double ds = length / (nodes.size() - 1);
    const double q = std::clamp(s / ds, 0.0, static_cast<double>(nodes.size() - 1));
    const size_t i = std::min(static_cast<size_t>(q), nodes.size() - 2);
    const double t = q - i, t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * nodes[i] + (t3 - 2 * t2 + t) * ds * tangents[i] +
           (-2 * t3 + 3 * t2) * nodes[i + 1] + (t3 - t2) * ds * tangents[i + 1];
  }
};

struct GeodesicOptions {
  OdeOptions ode;
  int nodes = 65;
  std::optional<double> box;  // LeftDomain beyond this sup-norm; chart box if empty
};

namespace detail {

using State6 = Eigen::Matrix<double, 6, 1>;

inline double g_speed(const MetricChart& chart, const Vec3& x, const Vec3& v) {
  return std::sqrt(v.dot(metric_at(chart, x).g * v));
}

// Integrates a unit-speed geodesic and keeps every accepted step.
inline void integrate_geodesic(const MetricChart& chart, const Vec3& x0, const Vec3& v0, double length,
                               const GeodesicOptions& opt, std::vector<double>& s_out,
                               std::vector<State6>& y_out) {
  const double box = opt.box.value_or(chart.domain.r_out);
  auto rhs = [&](double, const State6& y) {
    const Vec3 x = y.head<3>(), v = y.tail<3>();
    Tensor3 gam;
    try {
      gam = christoffel_at(chart, x);
    } catch (const OutOfDomain&) {
      throw LeftDomain("geodesic left the chart box");
    }
    State6 d;
    d.head<3>() = v;
    for (int k = 0; k < 3; ++k) d[3 + k] = -v.dot(gam[k] * v);
    return d;
  };
  State6 y0;
  y0 << x0, v0;
  s_out.clear();
  y_out.clear();
  dopri45<6>(rhs, 0.0, y0, length, opt.ode, [&](double s, const State6& y, const State6&) {
    if (y.head<3>().cwiseAbs().maxCoeff() > box) throw LeftDomain("geodesic left the box");
    s_out.push_back(s);
    y_out.push_back(y);
    return true;
  });
}

// Hermite resampling of accepted steps onto `count` uniform nodes.
inline void resample(const std::vector<double>& s, const std::vector<State6>& y, double length, int count,
                     GeodesicPath& p) {
  p.nodes.resize(count);
  p.tangents.resize(count);
  size_t seg = 0;
  for (int n = 0; n < count; ++n) {
    const double sn = length * n / (count - 1);
    while (seg + 2 < s.size() && s[seg + 1] < sn) ++seg;
    if (s.size() == 1) {
      p.nodes[n] = y[0].head<3>();
      p.tangents[n] = y[0].tail<3>();
      continue;
    }
    const double h = s[seg + 1] - s[seg];
    const double t = std::clamp((sn - s[seg]) / h, 0.0, 1.0), t2 = t * t, t3 = t2 * t;
    const Vec3 x0 = y[seg].head<3>(), x1 = y[seg + 1].head<3>();
    const Vec3 v0 = y[seg].tail<3>(), v1 = y[seg + 1].tail<3>();
    p.nodes[n] = (2 * t3 - 3 * t2 + 1) * x0 + (t3 - 2 * t2 + t) * h * v0 + (-2 * t3 + 3 * t2) * x1 +
                 (t3 - t2) * h * v1;
    // derivative of the Hermite cubic; adequate for node tangents
    p.tangents[n] = ((6 * t2 - 6 * t) * x0 + (3 * t2 - 4 * t + 1) * h * v0 + (-6 * t2 + 6 * t) * x1 +
                     (3 * t2 - 2 * t) * h * v1) / h;
  }
  p.nodes.front() = y.front().head<3>();
  p.tangents.front() = y.front().tail<3>();
  p.nodes.back() = y.back().head<3>();
  p.tangents.back() = y.back().tail<3>();
}

}  // namespace detail

/// Unit-speed geodesic from x0 with initial unit tangent v0 (|v0|_g = 1).
inline GeodesicPath shoot_geodesic(const MetricChart& chart, const Vec3& x0, const Vec3& v0, double length,
                                   const GeodesicOptions& opt = {}) {
  if (!(length > 0.0)) throw InvalidArgument("geodesic length must be positive");
  if (std::abs(detail::g_speed(chart, x0, v0) - 1.0) > 1e-10)
    throw InvalidArgument("initial tangent must have unit g-length");
  std::vector<double> s;
  std::vector<detail::State6> y;
  detail::integrate_geodesic(chart, x0, v0, length, opt, s, y);
  GeodesicPath p;
  p.length = length;
  for (const auto& st : y)
    p.speed_drift = std::max(p.speed_drift, std::abs(detail::g_speed(chart, st.head<3>(), st.tail<3>()) - 1.0));
  detail::resample(s, y, length, std::max(2, opt.nodes), p);
  return p;
}

/// Endpoint of the geodesic with initial velocity V after unit parameter time.
inline Vec3 exp_map(const MetricChart& chart, const Vec3& x, const Vec3& V, const GeodesicOptions& opt = {}) {
  const double L = detail::g_speed(chart, x, V);
  if (L == 0.0) return x;
  std::vector<double> s;
  std::vector<detail::State6> y;
  detail::integrate_geodesic(chart, x, V / L, L, opt, s, y);
  return y.back().head<3>();
}

// ---------------------------------------------------------------------------
// Coarse graph distance: 26-neighbour lattice on a box around the pair.

struct GraphDistance {
  double distance = std::numeric_limits<double>::infinity();
  std::vector<Vec3> polyline;
};

inline double segment_length(const MetricChart& chart, const Vec3& a, const Vec3& b) {
  // 3-point Gauss-Legendre in the straight-line parameter
  static const double xs[3] = {-std::sqrt(0.6), 0.0, std::sqrt(0.6)};
  static const double ws[3] = {5.0 / 9, 8.0 / 9, 5.0 / 9};
  const Vec3 e = b - a;
  double acc = 0.0;
  for (int q = 0; q < 3; ++q) acc += ws[q] * detail::g_speed(chart, a + 0.5 * (1 + xs[q]) * e, e);
  return 0.5 * acc;
}

inline GraphDistance graph_distance(const MetricChart& chart, const Vec3& x, const Vec3& y, int cells = 12,
                                    std::optional<double> box = std::nullopt) {
  const double lim = box.value_or(chart.domain.r_out);
  const double d0 = (y - x).norm();
  const double margin = 0.35 * d0 + 1e-9;
  Vec3 lo = x.cwiseMin(y).array() - margin, hi = x.cwiseMax(y).array() + margin;
  lo = lo.cwiseMax(Vec3::Constant(-lim));
  hi = hi.cwiseMin(Vec3::Constant(lim));
  const int n = cells + 1;
  const Vec3 step = (hi - lo) / cells;
  auto node = [&](int i, int j, int k) { return Vec3(lo.x() + i * step.x(), lo.y() + j * step.y(), lo.z() + k * step.z()); };
  const size_t lattice = static_cast<size_t>(n) * n * n;
  const size_t src = lattice, dst = lattice + 1;
  auto pos = [&](size_t v) {
    if (v == src) return x;
    if (v == dst) return y;
    return node(static_cast<int>(v % n), static_cast<int>((v / n) % n), static_cast<int>(v / (static_cast<size_t>(n) * n)));
  };
  auto cell_of = [&](const Vec3& p) {
    std::array<int, 3> c;
    for (int a = 0; a < 3; ++a) c[a] = std::clamp(static_cast<int>(std::floor((p[a] - lo[a]) / step[a])), 0, cells - 1);
    return c;
  };
  // endpoints connect to the 8 corners of their cell
  auto corners = [&](const Vec3& p) {
    const auto c = cell_of(p);
    std::vector<size_t> out;
    for (int dz = 0; dz < 2; ++dz)
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx)
          out.push_back(static_cast<size_t>(c[0] + dx) + n * (static_cast<size_t>(c[1] + dy) + n * static_cast<size_t>(c[2] + dz)));
    return out;
  };
  const auto dst_corners = corners(y);

  std::vector<double> dist(lattice + 2, std::numeric_limits<double>::infinity());
  std::vector<size_t> prev(lattice + 2, SIZE_MAX);
  using Item = std::pair<double, size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
  dist[src] = 0.0;
  heap.push({0.0, src});
  while (!heap.empty()) {
    const auto [dv, v] = heap.top();
    heap.pop();
    if (dv > dist[v]) continue;
    if (v == dst) break;
    auto relax = [&](size_t w) {
      const double nd = dv + segment_length(chart, pos(v), pos(w));
      if (nd < dist[w]) {
        dist[w] = nd;
        prev[w] = v;
        heap.push({nd, w});
      }
    };
    if (v == src) {
      for (size_t w : corners(x)) relax(w);
      continue;
    }
    const int i = static_cast<int>(v % n), j = static_cast<int>((v / n) % n), k = static_cast<int>(v / (static_cast<size_t>(n) * n));
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (!dx && !dy && !dz) continue;
          const int a = i + dx, b = j + dy, c = k + dz;
          if (a < 0 || b < 0 || c < 0 || a >= n || b >= n || c >= n) continue;
          relax(static_cast<size_t>(a) + n * (static_cast<size_t>(b) + n * static_cast<size_t>(c)));
        }
    if (std::find(dst_corners.begin(), dst_corners.end(), v) != dst_corners.end()) relax(dst);
  }
  GraphDistance out;
  out.distance = dist[dst];
  for (size_t v = dst; v != SIZE_MAX; v = prev[v]) out.polyline.push_back(pos(v));
  std::reverse(out.polyline.begin(), out.polyline.end());
  return out;
}

// ---------------------------------------------------------------------------
// Two-point problem

enum class GraphSeedPolicy { Fallback, Always };

struct DistanceOptions {
  GeodesicOptions geodesic;
  int max_newton = 60;
  double tol = 1e-11;  // endpoint residual relative to max(1, d)
  GraphSeedPolicy graph_seed = GraphSeedPolicy::Fallback;
  std::vector<double> cone_angles{0.05, 0.15, 0.3};
  int cone_azimuths = 6;
  int graph_cells = 12;
};

struct DistanceResult {
  double d = 0.0;
  GeodesicPath path;
  double graph_upper_bound = std::numeric_limits<double>::quiet_NaN();
  int converged_candidates = 0;
  std::vector<GeodesicPath> alternates;  // equal-length distinct minimizers
};

namespace detail {

// Levenberg-Marquardt on V -> exp_x(V) - y with a forward-difference
// Jacobian; the damping copes with near-conjugate chords through a lens.
inline std::optional<Vec3> newton_shoot(const MetricChart& chart, const Vec3& x, const Vec3& y, Vec3 V,
                                        const DistanceOptions& opt) {
  auto F = [&](const Vec3& w) -> std::optional<Vec3> {
    try {
      return Vec3(exp_map(chart, x, w, opt.geodesic) - y);
    } catch (const LeftDomain&) {
    } catch (const NoConvergence&) {
    }
    return std::nullopt;
  };
  auto r0 = F(V);
  if (!r0) return std::nullopt;
  Vec3 r = *r0;
  const double scale = std::max(1.0, (y - x).norm());
  double lambda = -1.0;
  for (int it = 0; it < opt.max_newton; ++it) {
    if (r.norm() < opt.tol * scale) return V;
    Mat3 J;
    const double eps = 1e-7 * std::max(1.0, V.norm());
    for (int a = 0; a < 3; ++a) {
      Vec3 W = V;
      W[a] += eps;
      const auto fw = F(W);
      if (!fw) return std::nullopt;
      J.col(a) = (*fw - r) / eps;
    }
    const Mat3 JtJ = J.transpose() * J;
    const Vec3 g = J.transpose() * r;
    if (lambda < 0.0) lambda = 1e-6 * JtJ.diagonal().maxCoeff();
    bool moved = false;
    for (int tries = 0; tries < 30 && !moved; ++tries) {
      const Vec3 dV = (JtJ + lambda * Mat3::Identity()).ldlt().solve(-g);
      const auto rn = F(V + dV);
      if (rn && rn->norm() < r.norm()) {
        V += dV;
        r = *rn;
        lambda = std::max(lambda / 5.0, 1e-15);
        moved = true;
      } else {
        lambda *= 4.0;
      }
    }
    if (!moved) break;
  }
  if (r.norm() < opt.tol * scale) return V;
  return std::nullopt;
}

}  // namespace detail

inline DistanceResult distance(const MetricChart& chart, const Vec3& x, const Vec3& y,
                               const DistanceOptions& opt = {}) {
  chart.check_point(x);
  chart.check_point(y);
  DistanceResult res;
  if (x == y) {
    res.path.nodes = {x};
    res.path.tangents = {Vec3::Zero()};
    return res;
  }
  struct Candidate {
    Vec3 V;
    PathMethod method;
  };
  std::vector<Candidate> found;
  const Vec3 chord = y - x;
  if (auto V = detail::newton_shoot(chart, x, y, chord, opt)) found.push_back({*V, PathMethod::Shooting});

  // rings of directions around the chord, for targets behind a lens
  if (found.empty() || opt.graph_seed == GraphSeedPolicy::Always) {
    const Vec3 c = chord.normalized(), e1 = chord.unitOrthogonal(), e2 = c.cross(e1);
    for (double a : opt.cone_angles) {
      const size_t before = found.size();
      for (int k = 0; k < opt.cone_azimuths; ++k) {
        const double ph = 2.0 * M_PI * k / opt.cone_azimuths;
        const Vec3 dir = std::cos(a) * c + std::sin(a) * (std::cos(ph) * e1 + std::sin(ph) * e2);
        if (auto V = detail::newton_shoot(chart, x, y, dir * chord.norm(), opt))
          found.push_back({*V, PathMethod::Shooting});
      }
      if (found.size() > before && opt.graph_seed == GraphSeedPolicy::Fallback) break;
    }
  }

  if (found.empty() || opt.graph_seed == GraphSeedPolicy::Always) {
    const auto gd = graph_distance(chart, x, y, opt.graph_cells, opt.geodesic.box);
    res.graph_upper_bound = gd.distance;
    if (gd.polyline.size() >= 2 && std::isfinite(gd.distance)) {
      // aim along the first graph leg, scaled to the graph length
      const Vec3 dir = gd.polyline[1] - gd.polyline[0];
      const Vec3 V0 = dir / detail::g_speed(chart, x, dir) * gd.distance;
      if (auto V = detail::newton_shoot(chart, x, y, V0, opt)) found.push_back({*V, PathMethod::GraphSeedShooting});
    }
  }
  if (found.empty()) {
    if (std::isnan(res.graph_upper_bound)) res.graph_upper_bound = graph_distance(chart, x, y, opt.graph_cells, opt.geodesic.box).distance;
    throw NoConvergence("shooting failed; graph upper bound " + fmt_double(res.graph_upper_bound) +
                        " (quality: upper bound only)");
  }
  res.converged_candidates = static_cast<int>(found.size());
  std::vector<GeodesicPath> paths;
  for (const auto& c : found) {
    const double L = detail::g_speed(chart, x, c.V);
    GeodesicPath p = shoot_geodesic(chart, x, c.V / L, L, opt.geodesic);
    p.method = c.method;
    p.endpoint_residual = (p.nodes.back() - y).norm();
    paths.push_back(std::move(p));
  }
  std::stable_sort(paths.begin(), paths.end(), [](const auto& a, const auto& b) { return a.length < b.length; });
  res.path = paths.front();
  res.d = res.path.length;
  for (size_t i = 1; i < paths.size(); ++i) {
    if (paths[i].length - res.d > 1e-8) continue;
    double sep = 0.0;
    for (size_t k = 0; k < paths[i].nodes.size(); ++k)
      sep = std::max(sep, (paths[i].nodes[k] - res.path.nodes[k]).norm());
    if (sep > 1e-6) res.alternates.push_back(paths[i]);
  }
  return res;
}

// ---------------------------------------------------------------------------

/// Sum_j |hess u^j|_g on the grid.
inline ScalarGridField hessian_norm_field(const HarmonicTriple& t) {
  ScalarGridField f(t.grid);
  for (size_t idx = 0; idx < t.grid.size(); ++idx)
    for (int a = 0; a < 3; ++a)
      if (t.solved[a]) f[idx] += std::sqrt(t.hess_norm2(a, idx));
  return f;
}

/// Line integral of f along the path: composite Simpson on the path nodes
/// (trapezoid when the node count is even), trilinear interpolation.
inline double segment_functional(const GeodesicPath& path, const ScalarGridField& f) {
  const size_t n = path.nodes.size();
  if (n < 2 || path.length == 0.0) return 0.0;
  std::vector<double> v(n);
  for (size_t i = 0; i < n; ++i) {
    v[i] = interpolate_trilinear(f, path.nodes[i]);
    if (v[i] < -1e-12) throw InvalidArgument("segment functional needs a nonnegative integrand");
  }
  const double h = path.length / (n - 1);
  double acc = 0.0;
  if (n % 2 == 1) {
    for (size_t i = 0; i + 2 < n; i += 2) acc += v[i] + 4 * v[i + 1] + v[i + 2];
    return acc * h / 3.0;
  }
  for (size_t i = 0; i + 1 < n; ++i) acc += v[i] + v[i + 1];
  return acc * h / 2.0;
}

/// Largest functional over the recorded minimizers.
inline double segment_functional(const DistanceResult& r, const ScalarGridField& f) {
  double best = segment_functional(r.path, f);
  for (const auto& p : r.alternates) best = std::max(best, segment_functional(p, f));
  return best;
}

// ---------------------------------------------------------------------------
// Mean-value point picking

struct MeanValuePick {
  Vec3 point = Vec3::Zero();
  double score = 0.0;
  double average = 0.0;  // over accepted samples
  int accepted = 0;
};

enum class PickRule {
  Argmin,       // lowest score
  TwiceAverage  // first sample scoring at most twice the sample average
};

inline std::string to_string(PickRule r) { return r == PickRule::Argmin ? "argmin" : "twice_average"; }
inline PickRule pick_rule_from_string(const std::string& s) {
  if (s == "argmin") return PickRule::Argmin;
  if (s == "twice_average") return PickRule::TwiceAverage;
  throw InvalidArgument("pick rule must be 'argmin' or 'twice_average'");
}

struct PickOptions {
  int n_samples = 8;
  bool geodesic_filter = true;
  bool center_first = true;
  double tie_tolerance = 1e-9;
  PickRule rule = PickRule::Argmin;
};

/// Picks among samples in the rho-ball; the centre is sample 0 when
/// `center_first`. Argmin ties within tie_tolerance keep the earlier sample.
inline MeanValuePick mean_value_pick(const MetricChart& chart, const Vec3& center, double rho,
                                     const std::function<double(const Vec3&)>& score, RandomStream rng,
                                     const PickOptions& opt = {}, const DistanceOptions& dopt = {}) {
  if (!(rho > 0.0)) throw InvalidArgument("pick radius must be positive");
  if (opt.n_samples < 1) throw InvalidArgument("need at least one sample");
  MeanValuePick out;
  std::vector<std::pair<Vec3, double>> kept;
  double best = std::numeric_limits<double>::infinity(), sum = 0.0;
  for (int s = 0; s < opt.n_samples; ++s) {
    const Vec3 p = (s == 0 && opt.center_first) ? center : rng.in_ball(center, rho);
    if (opt.geodesic_filter && p != center) {
      try {
        if (distance(chart, center, p, dopt).d > rho) continue;
      } catch (const NoConvergence&) {
        continue;
      }
    }
    const double v = score(p);
    kept.emplace_back(p, v);
    sum += v;
    ++out.accepted;
    if (out.accepted == 1 || v < best - opt.tie_tolerance * std::max(1.0, std::abs(best))) {
      best = v;
      out.point = p;
      out.score = v;
    }
  }
  if (out.accepted == 0) throw EmptySample("no sample survived the geodesic-ball filter");
  out.average = sum / out.accepted;
  if (opt.rule == PickRule::TwiceAverage && std::isfinite(out.average)) {
    const double bound = 2.0 * out.average + opt.tie_tolerance * std::max(1.0, std::abs(out.average));
    for (const auto& [p, v] : kept)
      if (v <= bound) {
        out.point = p;
        out.score = v;
        break;
      }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Level-set projection

enum class FarPointPolicy { Aligned, Axis };

inline std::string to_string(FarPointPolicy p) { return p == FarPointPolicy::Aligned ? "aligned" : "axis"; }
inline FarPointPolicy far_point_policy_from_string(const std::string& s) {
  if (s == "aligned") return FarPointPolicy::Aligned;
  if (s == "axis") return FarPointPolicy::Axis;
  throw InvalidArgument("far point policy must be 'aligned' or 'axis'");
}

/// Solves u(q) = target by Newton on the interpolated triple.
inline Vec3 invert_map(const HarmonicTriple& t, const Vec3& target, Vec3 guess) {
  for (int a = 0; a < 3; ++a)
    if (!t.solved[a]) throw InvalidArgument("map inversion needs all three harmonic coordinates");
  for (int it = 0; it < 50; ++it) {
    const Vec3 r = t.map(guess) - target;
    if (r.norm() < 1e-11 * std::max(1.0, target.norm())) return guess;
    Mat3 J;
    for (int a = 0; a < 3; ++a) J.row(a) = interpolate(t.du[a], guess).transpose();
    guess -= J.fullPivLu().solve(r);
    if (!t.grid.contains(guess)) throw OutOfDomain("far point falls outside the grid");
  }
  throw NoConvergence("map inversion did not converge");
}

struct ProjectionParams {
  double rho = 0.0;           // pick radius; 0 means two grid cells
  double far_fraction = 0.6;  // L = far_fraction * R_out
  FarPointPolicy policy = FarPointPolicy::Aligned;
  PickOptions pick;
  DistanceOptions distance;
  int path_nodes = 257;
};

struct Projection {
  Vec3 x_star = Vec3::Zero();
  Vec3 z = Vec3::Zero();
  Vec3 far_point = Vec3::Zero();
  GeodesicPath path;
  double level_residual = 0.0;
  double pick_score = 0.0;
};

inline Projection level_set_projection(const MetricChart& chart, const HarmonicTriple& t, const Vec3& x,
                                       const Vec3& y, int axis, const ProjectionParams& params,
                                       RandomStream rng) {
  if (!same_chart(t.chart, chart)) throw MismatchedChart("harmonic triple was solved on a different chart");
  if (axis < 0 || axis > 2) throw InvalidArgument("axis must be 0, 1 or 2");
  const double level = t.value(axis, y);
  Projection pr;
  if (t.value(axis, x) == level) {
    pr.x_star = pr.z = x;
    pr.path.nodes = {x};
    pr.path.tangents = {Vec3::Zero()};
    return pr;
  }
  const double L = params.far_fraction * t.grid.r_out();
  DistanceOptions dopt = params.distance;
  dopt.geodesic.box = t.grid.r_out();
  dopt.geodesic.nodes = params.path_nodes;

  // sign from the actual start: x* may sit across the level from x
  auto far_point = [&](const Vec3& from) {
    const double sign = level > t.value(axis, from) ? 1.0 : -1.0;
    Vec3 target = Vec3::Zero();
    if (params.policy == FarPointPolicy::Aligned) target = t.map(from);
    target[axis] = (params.policy == FarPointPolicy::Aligned ? target[axis] : 0.0) + sign * L;
    return invert_map(t, target, target);
  };
  const ScalarGridField f = hessian_norm_field(t);
  auto score = [&](const Vec3& p) { return segment_functional(distance(chart, p, far_point(p), dopt), f); };
  const double rho = params.rho > 0.0 ? params.rho : 2.0 * t.grid.h();
  const auto pick = mean_value_pick(chart, x, rho, score, rng, params.pick, dopt);
  pr.x_star = pick.point;
  pr.pick_score = pick.score;
  pr.far_point = far_point(pr.x_star);
  pr.path = distance(chart, pr.x_star, pr.far_point, dopt).path;

  // first crossing of the level along the path, then bisection in arclength
  const auto& nodes = pr.path.nodes;
  const double ds = pr.path.length / (nodes.size() - 1);
  double prev = t.value(axis, nodes[0]) - level;
  for (size_t k = 1; k < nodes.size(); ++k) {
    const double cur = t.value(axis, nodes[k]) - level;
    if ((prev < 0) != (cur < 0) || cur == 0.0) {
      double a = (k - 1) * ds, b = k * ds, fa = prev;
      for (int it = 0; it < 200; ++it) {
        const double m = 0.5 * (a + b);
        const double fm = t.value(axis, pr.path.at(m)) - level;
        if (std::abs(fm) < 1e-13 || b - a < 1e-14) {
          a = b = m;
          break;
        }
        if ((fm < 0) == (fa < 0)) {
          a = m;
          fa = fm;
        } else {
          b = m;
        }
      }
      pr.z = pr.path.at(0.5 * (a + b));
      pr.level_residual = std::abs(t.value(axis, pr.z) - level);
      return pr;
    }
    prev = cur;
  }
  throw NoCrossing("path to the far point never reaches the level set; increase L");
}

// ---------------------------------------------------------------------------

struct PythagoreanRecord {
  Vec3 x = Vec3::Zero();  // the perturbed start x*
  Vec3 y = Vec3::Zero();
  Vec3 z = Vec3::Zero();
  int axis = 0;
  double defect = 0.0;
  double u_defect_same = 0.0;
  double u_defect_cross = 0.0;
  double d_xy = 0.0, d_xz = 0.0, d_yz = 0.0;
  double level_residual = 0.0;
};

inline PythagoreanRecord pythagorean_check(const MetricChart& chart, const HarmonicTriple& t, const Vec3& x,
                                           const Vec3& y, int axis, const ProjectionParams& params,
                                           RandomStream rng) {
  PythagoreanRecord rec;
  rec.axis = axis;
  rec.x = rec.z = x;
  rec.y = y;
  if (x == y) return rec;
  const Projection pr = level_set_projection(chart, t, x, y, axis, params, rng);
  DistanceOptions dopt = params.distance;
  dopt.geodesic.box = t.grid.r_out();
  rec.x = pr.x_star;
  rec.z = pr.z;
  rec.level_residual = pr.level_residual;
  rec.d_xy = distance(chart, rec.x, y, dopt).d;
  rec.d_xz = distance(chart, rec.x, rec.z, dopt).d;
  rec.d_yz = distance(chart, y, rec.z, dopt).d;
  rec.defect = std::abs(rec.d_xz * rec.d_xz + rec.d_yz * rec.d_yz - rec.d_xy * rec.d_xy);
  const Vec3 ux = t.map(rec.x), uz = t.map(rec.z);
  rec.u_defect_same = std::abs(rec.d_xz - std::abs(ux[axis] - uz[axis]));
  for (int j = 0; j < 3; ++j)
    if (j != axis) rec.u_defect_cross = std::max(rec.u_defect_cross, std::abs(ux[j] - uz[j]));
  return rec;
}

// ---------------------------------------------------------------------------
// Ball-volume ratios against the constant-curvature model

/// Volume of a geodesic ball of radius r in the space form of curvature -kappa.
inline double model_ball_volume(double r, double kappa) {
  if (kappa <= 0.0) return 4.0 * M_PI * r * r * r / 3.0;
  const double a = std::sqrt(kappa), x = 2.0 * a * r;
  double shx;  // sinh(x) - x
  if (x < 0.5) {
    // series avoids cancellation for small x
    const double x2 = x * x;
    shx = x * x2 / 6.0 * (1 + x2 / 20.0 * (1 + x2 / 42.0 * (1 + x2 / 72.0 * (1 + x2 / 110.0))));
  } else {
    shx = std::sinh(x) - x;
  }
  return M_PI * shx / (a * kappa);
}

struct BishopGromovReport {
  Vec3 center = Vec3::Zero();
  double kappa = 0.0;
  std::vector<double> radii, volumes, model_volumes, ratios;
  bool nonincreasing = true;
  double worst_increase = 0.0;  // max relative rise between consecutive ratios
};

struct BishopGromovOptions {
  FastMarchingOptions marching;
  double box_factor = 1.25;  // marching half-width / largest radius
  double tolerance = 0.01;
};

inline BishopGromovReport bishop_gromov_check(const MetricChart& chart, const Vec3& q, std::vector<double> radii,
                                              double kappa, const BishopGromovOptions& opt = {}) {
  if (radii.empty()) throw InvalidArgument("need at least one radius");
  if (kappa < 0.0) throw InvalidArgument("kappa must be nonnegative");
  std::sort(radii.begin(), radii.end());
  if (!(radii.front() > 0.0)) throw InvalidArgument("radii must be positive");
  const double hw = opt.box_factor * radii.back();
  if (!chart.in_box(q + Vec3::Constant(hw)) || !chart.in_box(q - Vec3::Constant(hw)))
    throw OutOfDomain("ball box leaves the chart box");
  const DistanceField d = fast_marching(chart, q, hw, opt.marching);
  // the largest ball must not touch the marching box
  double face_min = std::numeric_limits<double>::infinity();
  d.grid.for_each_node([&](int i, int j, int k, size_t idx) {
    if (d.grid.on_boundary(i, j, k)) face_min = std::min(face_min, d.t[idx]);
  });
  if (face_min <= radii.back()) throw OutOfDomain("geodesic ball reaches the marching box");

  BishopGromovReport rep;
  rep.center = q;
  rep.kappa = kappa;
  rep.radii = radii;
  for (double r : radii) {
    const double v = ball_volume(d, r), m = model_ball_volume(r, kappa);
    rep.volumes.push_back(v);
    rep.model_volumes.push_back(m);
    rep.ratios.push_back(v / m);
  }
  for (size_t i = 1; i < rep.ratios.size(); ++i) {
    const double rise = rep.ratios[i] / rep.ratios[i - 1] - 1.0;
    rep.worst_increase = std::max(rep.worst_increase, rise);
  }
  rep.nonincreasing = rep.worst_increase <= opt.tolerance;
  return rep;
}

// ---------------------------------------------------------------------------
// Serialization

inline json to_json(const GeodesicPath& p) {
  json j;
  j["length"] = json_number(p.length);
  j["method"] = to_string(p.method);
  j["endpoint_residual"] = json_number(p.endpoint_residual);
  json pts = json::array();
  for (const auto& v : p.nodes) pts.push_back(json_vec(v));
  j["points"] = pts;
  return j;
}

inline CsvTable pythagorean_table() {
  return CsvTable({"family", "m", "i", "x", "y", "z", "defect", "u_defect_same", "u_defect_cross", "d_xy",
                   "d_xz", "d_yz"});
}

inline void append_row(CsvTable& t, const MetricChart& chart, const PythagoreanRecord& r) {
  t.row({to_string(chart.family), fmt_double(chart.monopole()), std::to_string(r.axis + 1), fmt_point(r.x),
         fmt_point(r.y), fmt_point(r.z), fmt_double(r.defect), fmt_double(r.u_defect_same),
         fmt_double(r.u_defect_cross), fmt_double(r.d_xy), fmt_double(r.d_xz), fmt_double(r.d_yz)});
}

inline json to_json(const BishopGromovReport& r) {
  json j;
  j["center"] = json_vec(r.center);
  j["kappa"] = json_number(r.kappa);
  j["radii"] = r.radii;
  j["volumes"] = r.volumes;
  j["model_volumes"] = r.model_volumes;
  j["ratios"] = r.ratios;
  j["nonincreasing"] = r.nonincreasing;
  j["worst_increase"] = json_number(r.worst_increase);
  return j;
}

}  // namespace afstab
