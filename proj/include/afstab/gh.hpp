#pragma once

// Distortion of the harmonic map u = (u^1, u^2, u^3), gradient flows for
// surjectivity, and the m -> 0 stability sweep.

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <limits>
#include <string>
#include <vector>

#include "afstab/geodesy.hpp"
#include "afstab/mass.hpp"
#include "afstab/mass_inequality.hpp"
#include "afstab/ode.hpp"

namespace afstab {

/// Linear-interpolated quantile of an ascending vector.
inline double quantile_sorted(const std::vector<double>& v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double pos = q * (v.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - lo) * (v[hi] - v[lo]);
}

/// sum_ij |g(grad u^i, grad u^j) - delta_ij| at every node.
inline ScalarGridField orthonormality_defect_field(const HarmonicTriple& t) {
  for (int a = 0; a < 3; ++a)
    if (!t.solved[a]) throw InvalidArgument("orthonormality needs all three axes");
  ScalarGridField f(t.grid, 0.0);
  t.grid.for_each_node([&](int, int, int, size_t idx) {
    double s = 0.0;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) s += std::abs(t.inner(a, b, idx) - (a == b ? 1.0 : 0.0));
    f.values[idx] = s;
  });
  return f;
}

/// Integral of the orthonormality defect over the chart ball |x - p| <= r.
inline double ortho_l1(const HarmonicTriple& t, double r) {
  const ScalarGridField f = orthonormality_defect_field(t);
  const double h3 = std::pow(t.grid.h(), 3);
  std::vector<double> cell(t.grid.size(), 0.0);
  t.grid.for_each_node([&](int i, int j, int k, size_t idx) {
    if (t.flagged(i, j, k) || (t.grid.node(i, j, k) - t.base_point).norm() > r) return;
    cell[idx] = f.values[idx] * t.metric.sqrt_det[idx] * h3;
  });
  return pairwise_sum(cell);
}

/// L1 norm of the discrete divergence div_g grad u^j; harmonic gradients are
/// divergence free, so this is the measure-preservation residual of the flow.
inline double divergence_l1(const HarmonicTriple& t, int axis, double r) {
  detail::check_triple(t, t.chart, axis);
  const Grid& g = t.grid;
  std::array<std::vector<double>, 3> flux;
  for (int a = 0; a < 3; ++a) {
    flux[a].resize(g.size());
    for (size_t idx = 0; idx < g.size(); ++idx)
      flux[a][idx] = t.metric.sqrt_det[idx] * t.grad[axis].values[idx][a];
  }
  std::array<std::vector<double>, 3> d;
  for (int a = 0; a < 3; ++a) d[a] = fd::partial(g, flux[a], a);
  const double h3 = std::pow(g.h(), 3);
  std::vector<double> cell(g.size(), 0.0);
  // divergence of a differentiated field needs one more clean layer
  g.for_each_node([&](int i, int j, int k, size_t idx) {
    if (g.near_boundary(i, j, k, 2 * t.boundary_layers) || (g.node(i, j, k) - t.base_point).norm() > r) return;
    cell[idx] = std::abs(d[0][idx] + d[1][idx] + d[2][idx]) * h3;
  });
  return pairwise_sum(cell);
}

// ---------------------------------------------------------------------------
// Distortion

struct DistortionOptions {
  int threads = 1;
  int max_rejections = 1000;  // per sampled point
  double lipschitz_tolerance = 1e-3;
  DistanceOptions distance;
};

struct PairDefect {
  Vec3 x = Vec3::Zero(), y = Vec3::Zero();
  double d = 0.0, u_gap = 0.0, defect = 0.0;
  bool ok = false;
};

struct DistortionReport {
  double r = 0.0;
  int n_pairs = 0;
  int n_failed = 0;
  double max_defect = 0.0;
  double p50 = 0.0, p90 = 0.0, p99 = 0.0;
  double ortho_l1 = 0.0;
  double image_hausdorff = std::numeric_limits<double>::quiet_NaN();  // filled from flows
  int lipschitz_violations = 0;    // |u(x)| > grad_sup d(p, x)
  int containment_violations = 0;  // |u(x)| > r + max_defect
  std::vector<PairDefect> pairs;

  double failure_fraction() const { return n_pairs > 0 ? double(n_failed) / n_pairs : 0.0; }
};

namespace detail {

struct BallPoint {
  Vec3 x;
  double d_p;
};

// rejection from the chart ball, then the geodesic-ball filter
inline BallPoint sample_geodesic_ball(const MetricChart& chart, const Vec3& p, double r, RandomStream& rng,
                                      const DistortionOptions& opt) {
  for (int k = 0; k < opt.max_rejections; ++k) {
    const Vec3 x = rng.in_ball(p, r);
    const double d = distance(chart, p, x, opt.distance).d;
    if (d <= r) return {x, d};
  }
  throw EmptySample("no sample landed in the geodesic ball");
}

inline double max_grad_sup(const HarmonicTriple& t) {
  return std::max({grad_sup(t, 0), grad_sup(t, 1), grad_sup(t, 2)});
}

}  // namespace detail

inline DistortionReport gh_distortion(const MetricChart& chart, const HarmonicTriple& t, double r, int n_pairs,
                                      const RandomStream& rng, const DistortionOptions& opt = {}) {
  if (!same_chart(t.chart, chart)) throw MismatchedChart("harmonic triple was solved on a different chart");
  if (!(r > 0.0) || n_pairs < 1) throw InvalidArgument("distortion needs r > 0 and at least one pair");
  if (!t.normalized) throw InvalidArgument("triple must be normalized at the base point");
  const Vec3 p = t.base_point;
  if (!t.grid.contains(p + Vec3::Constant(r)) || !t.grid.contains(p - Vec3::Constant(r)))
    throw OutOfDomain("distortion ball leaves the grid");
  const double gs = detail::max_grad_sup(t);

  struct Outcome {
    PairDefect pd;
    int lipschitz = 0;
    std::array<double, 2> u_norm{0, 0};
  };
  auto one = [&](int k) {
    Outcome o;
    RandomStream s = rng.split(static_cast<std::uint64_t>(k));
    try {
      const auto a = detail::sample_geodesic_ball(chart, p, r, s, opt);
      const auto b = detail::sample_geodesic_ball(chart, p, r, s, opt);
      o.pd.x = a.x;
      o.pd.y = b.x;
      const Vec3 ua = t.map(a.x), ub = t.map(b.x);
      o.u_norm = {ua.norm(), ub.norm()};
      for (const auto& [u, d] : {std::pair{ua, a.d_p}, std::pair{ub, b.d_p}})
        if (u.norm() > gs * d * (1 + opt.lipschitz_tolerance) + 1e-12) ++o.lipschitz;
      o.pd.d = distance(chart, a.x, b.x, opt.distance).d;
      o.pd.u_gap = (ua - ub).norm();
      o.pd.defect = std::abs(o.pd.d - o.pd.u_gap);
      o.pd.ok = true;
    } catch (const NoConvergence&) {
    } catch (const LeftDomain&) {
    }
    return o;
  };

  std::vector<Outcome> out(n_pairs);
  const int threads = std::max(1, opt.threads);
  std::vector<std::future<void>> jobs;
  for (int w = 0; w < threads; ++w)
    jobs.push_back(std::async(threads > 1 ? std::launch::async : std::launch::deferred, [&, w] {
      for (int k = w; k < n_pairs; k += threads) out[k] = one(k);
    }));
  for (auto& j : jobs) j.get();

  DistortionReport rep;
  rep.r = r;
  rep.n_pairs = n_pairs;
  std::vector<double> defects;
  for (const auto& o : out) {
    rep.pairs.push_back(o.pd);
    if (!o.pd.ok) {
      ++rep.n_failed;
      continue;
    }
    defects.push_back(o.pd.defect);
    rep.lipschitz_violations += o.lipschitz;
  }
  std::sort(defects.begin(), defects.end());
  if (!defects.empty()) {
    rep.max_defect = defects.back();
    rep.p50 = quantile_sorted(defects, 0.5);
    rep.p90 = quantile_sorted(defects, 0.9);
    rep.p99 = quantile_sorted(defects, 0.99);
  }
  for (const auto& o : out)
    if (o.pd.ok)
      for (double un : o.u_norm)
        if (un > r + rep.max_defect + 1e-12) ++rep.containment_violations;
  rep.ortho_l1 = ortho_l1(t, r);
  return rep;
}

// ---------------------------------------------------------------------------
// Gradient flows

struct FlowOptions {
  double domain_radius = 6.0;  // the r of the step precondition
  double rho = 0.0;            // pick radius; 0 means two cells
  bool check_precondition = true;
  PickOptions pick{8, true, true, 1e-9, PickRule::TwiceAverage};
  DistanceOptions distance;
  OdeOptions ode{1e-10, 1e-12, 1e-2, 0.25, 200000};
  double displacement_tolerance = 1e-3;
};

struct FlowStep {
  int axis = 0;
  double time = 0.0;  // signed; negative flows along -grad u^j
  Vec3 start = Vec3::Zero(), w_star = Vec3::Zero(), end = Vec3::Zero();
  Vec3 u_error = Vec3::Zero();  // u(end) - u(w*) - t e_j
  double length = 0.0;          // g-length of the flow line, bounds d(w*, end)
  double grad_sup = 0.0;
  bool displacement_ok = true;
  std::vector<Vec3> polyline;
};

namespace detail {

struct FlowLine {
  Vec3 end;
  double defect_integral, length;
  std::vector<Vec3> polyline;
};

inline FlowLine integrate_flow(const HarmonicTriple& t, const ScalarGridField* defect, int axis, const Vec3& y,
                               double time, const OdeOptions& ode, bool keep_path) {
  const double sgn = time < 0 ? -1.0 : 1.0;
  const double lim = t.grid.r_out() - t.boundary_layers * t.grid.h();
  using V = Eigen::Matrix<double, 5, 1>;
  auto inside = [&](const Vec3& x) { return x.cwiseAbs().maxCoeff() <= lim; };
  auto f = [&](double, const V& s) {
    const Vec3 x = s.head<3>();
    if (!inside(x)) throw LeftDomain("flow line left the solved grid");
    const Vec3 v = sgn * t.gradient(axis, x);
    V out;
    out.head<3>() = v;
    out[3] = defect ? interpolate_trilinear(*defect, x) : 0.0;
    const Mat3 g = metric_at(t.chart, x).g;
    out[4] = std::sqrt(v.dot(g * v));
    return out;
  };
  FlowLine fl;
  V s = V::Zero();
  s.head<3>() = y;
  if (!inside(y)) throw LeftDomain("flow start outside the solved grid");
  const V e = dopri45<5>(f, 0.0, s, std::abs(time), ode, [&](double, const V& st, const V&) {
    if (keep_path) fl.polyline.push_back(st.head<3>());
    return true;
  });
  fl.end = e.head<3>();
  fl.defect_integral = e[3];
  fl.length = e[4];
  return fl;
}

}  // namespace detail

/// One step: pick w* in B_rho(start) minimizing the flow-integrated
/// orthonormality defect, then flow along grad u^j for time |t|.
inline FlowStep gradient_flow_step(const MetricChart& chart, const HarmonicTriple& t, const Vec3& start, int axis,
                                   double time, RandomStream rng, const FlowOptions& opt = {}) {
  detail::check_triple(t, chart, axis);
  const double rho = opt.rho > 0.0 ? opt.rho : 2.0 * t.grid.h();
  FlowStep st;
  st.axis = axis;
  st.time = time;
  st.start = start;
  st.grad_sup = grad_sup(t, axis);
  if (opt.check_precondition) {
    const double dp = (start - t.base_point).norm() < 1e-14 ? 0.0 : distance(chart, t.base_point, start, opt.distance).d;
    if (!(dp + st.grad_sup * std::abs(time) + rho < opt.domain_radius))
      throw InvalidArgument("flow step leaves the working ball: d(p, start) + grad_sup t + rho >= r");
  }
  if (time == 0.0) {
    st.w_star = st.end = start;
    st.polyline = {start};
    return st;
  }
  const ScalarGridField defect = orthonormality_defect_field(t);
  auto score = [&](const Vec3& y) {
    try {
      return detail::integrate_flow(t, &defect, axis, y, time, opt.ode, false).defect_integral;
    } catch (const LeftDomain&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  const auto pick = mean_value_pick(chart, start, rho, score, rng, opt.pick, opt.distance);
  st.w_star = pick.point;
  const auto fl = detail::integrate_flow(t, nullptr, axis, st.w_star, time, opt.ode, true);
  st.end = fl.end;
  st.length = fl.length;
  st.polyline = fl.polyline;
  Vec3 e = Vec3::Zero();
  e[axis] = time;
  st.u_error = t.map(st.end) - t.map(st.w_star) - e;
  st.displacement_ok = st.length <= st.grad_sup * std::abs(time) * (1 + opt.displacement_tolerance);
  return st;
}

struct FlowTrace {
  Vec3 start = Vec3::Zero();
  Vec3 target = Vec3::Zero();
  std::array<FlowStep, 3> steps;
  Vec3 end = Vec3::Zero();
  double u_error = 0.0;  // |u(w) - target|
  double d_end = 0.0;    // d(p, w)
  bool displacement_ok = true;
};

/// Three successive flows from p along axes 1, 2, 3 for times target^1..3.
inline FlowTrace reach_point(const MetricChart& chart, const HarmonicTriple& t, const Vec3& target, double image_radius,
                             const RandomStream& rng, const FlowOptions& opt = {}) {
  const double gs = detail::max_grad_sup(t);
  const double margin = gs * 0.05 * image_radius;
  if (!(target.norm() < image_radius - margin))
    throw InvalidArgument("target must lie in the image ball minus the margin");
  FlowTrace tr;
  tr.start = t.base_point;
  tr.target = target;
  Vec3 x = t.base_point;
  for (int a = 0; a < 3; ++a) {
    tr.steps[a] = gradient_flow_step(chart, t, x, a, target[a], rng.split(a), opt);
    x = tr.steps[a].end;
    tr.displacement_ok = tr.displacement_ok && tr.steps[a].displacement_ok;
  }
  tr.end = x;
  tr.u_error = (t.map(x) - target).norm();
  tr.d_end = (x - t.base_point).norm() < 1e-14 ? 0.0 : distance(chart, t.base_point, x, opt.distance).d;
  return tr;
}

// ---------------------------------------------------------------------------
// Batches shared by the sweep and the single-stage runs

struct PythagoreanBatch {
  std::vector<PythagoreanRecord> records;
  int failures = 0;
  double p50 = 0.0, p90 = 0.0, max = 0.0;
};

/// Pairs drawn uniformly from the chart ball B_r(p); axis cycles 1, 2, 3.
inline PythagoreanBatch pythagorean_batch(const MetricChart& chart, const HarmonicTriple& t, double r, int n,
                                          const RandomStream& rng, const ProjectionParams& params = {}) {
  PythagoreanBatch b;
  std::vector<double> defs;
  for (int k = 0; k < n; ++k) {
    RandomStream s = rng.split(k);
    const Vec3 x = s.in_ball(t.base_point, r), y = s.in_ball(t.base_point, r);
    try {
      b.records.push_back(pythagorean_check(chart, t, x, y, k % 3, params, s.split(0)));
      defs.push_back(b.records.back().defect);
    } catch (const NoConvergence&) {
      ++b.failures;
    } catch (const NoCrossing&) {
      ++b.failures;
    }
  }
  if (n > 0 && defs.empty()) throw NoConvergence("every Pythagorean pair failed");
  std::sort(defs.begin(), defs.end());
  if (!defs.empty()) {
    b.p50 = quantile_sorted(defs, 0.5);
    b.p90 = quantile_sorted(defs, 0.9);
    b.max = defs.back();
  }
  return b;
}

struct FlowBatch {
  std::vector<FlowTrace> traces;
  int failures = 0;
  double err_max = 0.0;
  bool displacement_ok = true;
  bool within_ball = true;  // d(p, w) < flow domain radius
};

/// Targets drawn from B^E_{0.9 image_radius}(0).
inline FlowBatch flow_batch(const MetricChart& chart, const HarmonicTriple& t, int n, double image_radius,
                            const RandomStream& rng, const FlowOptions& opt = {}) {
  FlowBatch b;
  for (int k = 0; k < n; ++k) {
    RandomStream s = rng.split(k);
    const Vec3 target = s.in_ball(Vec3::Zero(), image_radius * 0.9);
    try {
      auto tr = reach_point(chart, t, target, image_radius, s.split(0), opt);
      b.err_max = std::max(b.err_max, tr.u_error);
      b.displacement_ok = b.displacement_ok && tr.displacement_ok;
      b.within_ball = b.within_ball && tr.d_end < opt.domain_radius;
      b.traces.push_back(std::move(tr));
    } catch (const LeftDomain&) {
      ++b.failures;
    } catch (const NoConvergence&) {
      ++b.failures;
    }
  }
  return b;
}

inline CsvTable flow_table(const FlowBatch& b) {
  CsvTable t({"target", "end", "u_error", "d_end", "displacement_ok"});
  for (const auto& tr : b.traces)
    t.row({fmt_point(tr.target), fmt_point(tr.end), fmt_double(tr.u_error), fmt_double(tr.d_end),
           tr.displacement_ok ? "1" : "0"});
  return t;
}

// ---------------------------------------------------------------------------
// Stability sweep

struct SweepProtocol {
  Grid grid = Grid(65, 20.0);
  TripleOptions triple;
  double eps_grad_relative = 1e-6;
  double r = 3.0;          // distortion / Pythagorean ball
  int n_pairs = 200;
  int n_pyth_pairs = 50;
  int n_targets = 20;
  double image_radius = 2.0;
  std::uint64_t seed = 42;
  int threads = 1;
  int certification_per_sphere = 48;
  std::vector<double> mass_radii;  // empty: defaults clipped to the chart
  int quadrature_order = 32;
  FlowOptions flow;
  DistortionOptions distortion;
  ProjectionParams projection;
};

struct StabilityReport {
  MetricFamily family = MetricFamily::Flat;
  double m = 0.0;
  int n = 0;
  double r_out = 0.0;
  std::string failed_stage;  // empty when every stage ran

  double scalar_min = 0.0, ricci_kappa = 0.0;
  bool af_ok = true;
  double mass = 0.0;
  double hessian_l2 = 0.0;  // max over axes
  double grad_sup = 0.0;
  double slack_min = 0.0;
  double ortho_l1 = 0.0;
  double divergence_l1 = 0.0;
  double pyth_p50 = 0.0, pyth_max = 0.0;
  int pyth_failures = 0;
  DistortionReport distortion;
  double image_hausdorff = 0.0;
  double flow_err_max = 0.0;
  int flow_failures = 0;
  bool displacement_ok = true;
  bool flows_within_ball = true;
  std::vector<FlowTrace> traces;
};

/// Chart for a sweep point: `make(m)` builds the family member.
using FamilyMaker = std::function<MetricChart(double)>;

inline StabilityReport stability_point(const MetricChart& chart, double m, const SweepProtocol& pr,
                                       const RandomStream& rng) {
  StabilityReport rep;
  rep.family = chart.family;
  rep.m = m;
  rep.n = pr.grid.n();
  rep.r_out = pr.grid.r_out();
  std::string stage = "certify";
  try {
    const auto cert = certify_hypotheses(chart, default_certification_sampling(chart, pr.certification_per_sphere));
    rep.scalar_min = cert.scalar_min;
    rep.ricci_kappa = cert.ricci_kappa;
    rep.af_ok = cert.af_ok;

    stage = "mass";
    if (chart.monopole() != 0.0 || !chart.bumps.empty())
      rep.mass = adm_mass(chart, pr.mass_radii.empty() ? default_mass_radii(chart) : pr.mass_radii,
                          ExtrapolationModel::for_decay(chart.decay),
                          SphereQuadrature(pr.quadrature_order, 2 * pr.quadrature_order))
                     .extrapolated;

    stage = "harmonic";
    TripleOptions to = pr.triple;
    to.threads = pr.threads;
    const HarmonicTriple t = build_harmonic_triple(chart, pr.grid, to);

    stage = "inequality";
    rep.slack_min = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
      const double gs = grad_sup(t, a);
      const auto ir = mass_inequality_rhs(t, chart, a, pr.eps_grad_relative * gs, rep.mass);
      rep.hessian_l2 = std::max(rep.hessian_l2, ir.hessian_l2);
      rep.grad_sup = std::max(rep.grad_sup, gs);
      rep.slack_min = std::min(rep.slack_min, ir.slack);
      rep.divergence_l1 = std::max(rep.divergence_l1, divergence_l1(t, a, pr.r));
    }

    stage = "pythagoras";
    if (pr.n_pyth_pairs > 0) {
      const auto pb = pythagorean_batch(chart, t, pr.r, pr.n_pyth_pairs, rng.split(1), pr.projection);
      rep.pyth_p50 = pb.p50;
      rep.pyth_max = pb.max;
      rep.pyth_failures = pb.failures;
    }

    stage = "distort";
    DistortionOptions dopt = pr.distortion;
    dopt.threads = pr.threads;
    rep.distortion = gh_distortion(chart, t, pr.r, pr.n_pairs, rng.split(2), dopt);
    rep.ortho_l1 = rep.distortion.ortho_l1;
    if (rep.distortion.failure_fraction() >= 0.01)
      throw NoConvergence("distance failures exceed 1% of pairs");

    stage = "flow";
    auto fb = flow_batch(chart, t, pr.n_targets, pr.image_radius, rng.split(3), pr.flow);
    rep.flow_err_max = fb.err_max;
    rep.flow_failures = fb.failures;
    rep.displacement_ok = fb.displacement_ok;
    rep.flows_within_ball = fb.within_ball;
    rep.traces = std::move(fb.traces);
    // one-sided Hausdorff from the sampled image ball to u(B)
    rep.image_hausdorff = rep.flow_err_max;
    rep.distortion.image_hausdorff = rep.image_hausdorff;
    stage.clear();
  } catch (const Error& e) {
    rep.failed_stage = stage + ": " + e.what();
  }
  return rep;
}

inline std::vector<StabilityReport> stability_sweep(const FamilyMaker& make, const std::vector<double>& m_values,
                                                    const SweepProtocol& pr) {
  if (m_values.empty()) throw InvalidArgument("sweep needs at least one parameter value");
  for (size_t i = 1; i < m_values.size(); ++i)
    if (!(m_values[i] < m_values[i - 1])) throw InvalidArgument("sweep values must be strictly decreasing");
  const RandomStream root(pr.seed, 0);
  std::vector<StabilityReport> out;
  for (size_t i = 0; i < m_values.size(); ++i)
    out.push_back(stability_point(make(m_values[i]), m_values[i], pr, root.split(i)));
  return out;
}

struct TrendCheck {
  std::string name;
  bool passed = false;
};

/// Strictly decreasing quantities along a decreasing sweep.
inline std::vector<TrendCheck> monotone_checks(const std::vector<StabilityReport>& reps) {
  auto decreasing = [&](const std::string& name, auto get) {
    TrendCheck c{name, reps.size() >= 2};
    for (size_t i = 0; i < reps.size(); ++i) {
      if (!reps[i].failed_stage.empty()) c.passed = false;
      if (i > 0 && !(get(reps[i]) < get(reps[i - 1]))) c.passed = false;
    }
    return c;
  };
  return {
      decreasing("mass", [](const StabilityReport& r) { return r.mass; }),
      decreasing("hessian_l2", [](const StabilityReport& r) { return r.hessian_l2; }),
      decreasing("ortho_l1", [](const StabilityReport& r) { return r.ortho_l1; }),
      decreasing("defect_p50", [](const StabilityReport& r) { return r.distortion.p50; }),
      decreasing("defect_p90", [](const StabilityReport& r) { return r.distortion.p90; }),
      decreasing("pyth_p50", [](const StabilityReport& r) { return r.pyth_p50; }),
      decreasing("flow_err_max", [](const StabilityReport& r) { return r.flow_err_max; }),
  };
}

// ---------------------------------------------------------------------------
// Serialization

inline json to_json(const DistortionReport& r) {
  return {{"r", r.r},
          {"n_pairs", r.n_pairs},
          {"n_failed", r.n_failed},
          {"max_defect", json_number(r.max_defect)},
          {"quantiles", {{"p50", json_number(r.p50)}, {"p90", json_number(r.p90)}, {"p99", json_number(r.p99)}}},
          {"ortho_l1", json_number(r.ortho_l1)},
          {"image_hausdorff", json_number(r.image_hausdorff)},
          {"lipschitz_violations", r.lipschitz_violations},
          {"containment_violations", r.containment_violations}};
}

inline json to_json(const FlowStep& s) {
  json pts = json::array();
  for (const Vec3& x : s.polyline) pts.push_back(json_vec(x));
  return {{"axis", s.axis},
          {"time", s.time},
          {"start", json_vec(s.start)},
          {"w_star", json_vec(s.w_star)},
          {"end", json_vec(s.end)},
          {"u_error", json_vec(s.u_error)},
          {"length", s.length},
          {"displacement_ok", s.displacement_ok},
          {"polyline", pts}};
}

inline json to_json(const FlowTrace& t) {
  json steps = json::array();
  for (const auto& s : t.steps) steps.push_back(to_json(s));
  return {{"start", json_vec(t.start)}, {"target", json_vec(t.target)}, {"end", json_vec(t.end)},
          {"u_error", t.u_error},       {"d_end", t.d_end},             {"displacement_ok", t.displacement_ok},
          {"steps", steps}};
}

inline json to_json(const StabilityReport& r) {
  return {{"family", to_string(r.family)},
          {"m", r.m},
          {"N", r.n},
          {"R_out", r.r_out},
          {"failed_stage", r.failed_stage},
          {"certificate", {{"scalar_min", json_number(r.scalar_min)},
                           {"ricci_kappa", json_number(r.ricci_kappa)},
                           {"af_ok", r.af_ok}}},
          {"mass", json_number(r.mass)},
          {"hessian_l2", json_number(r.hessian_l2)},
          {"grad_sup", json_number(r.grad_sup)},
          {"slack_min", json_number(r.slack_min)},
          {"ortho_l1", json_number(r.ortho_l1)},
          {"divergence_l1", json_number(r.divergence_l1)},
          {"pythagorean", {{"p50", json_number(r.pyth_p50)}, {"max", json_number(r.pyth_max)}, {"failures", r.pyth_failures}}},
          {"distortion", to_json(r.distortion)},
          {"image_hausdorff", json_number(r.image_hausdorff)},
          {"flow_err_max", json_number(r.flow_err_max)},
          {"flow_failures", r.flow_failures},
          {"displacement_ok", r.displacement_ok},
          {"flows_within_ball", r.flows_within_ball}};
}

inline CsvTable stability_table() {
  return CsvTable({"family", "m", "N", "R_out", "mass", "hessian_l2", "grad_sup", "ortho_l1", "defect_p50",
                   "defect_p90", "defect_max", "image_hausdorff", "flow_err_max"});
}

inline void append_row(CsvTable& t, const StabilityReport& r) {
  t.row({to_string(r.family), fmt_double(r.m), std::to_string(r.n), fmt_double(r.r_out), fmt_double(r.mass),
             fmt_double(r.hessian_l2), fmt_double(r.grad_sup), fmt_double(r.ortho_l1), fmt_double(r.distortion.p50),
             fmt_double(r.distortion.p90), fmt_double(r.distortion.max_defect), fmt_double(r.image_hausdorff),
             fmt_double(r.flow_err_max)});
}

inline CsvTable distortion_pairs_table(const DistortionReport& r) {
  CsvTable t({"x", "y", "d", "u_gap", "defect", "ok"});
  for (const auto& p : r.pairs)
    t.row({fmt_point(p.x), fmt_point(p.y), fmt_double(p.d), fmt_double(p.u_gap), fmt_double(p.defect),
               p.ok ? "1" : "0"});
  return t;
}

}  // namespace afstab
