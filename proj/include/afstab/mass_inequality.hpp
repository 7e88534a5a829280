#pragma once

// Cell integrals of the harmonic-function mass inequality integrand, the
// Kato-type comparison, and the relaxed scalar-curvature certificate.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "afstab/harmonic.hpp"
#include "afstab/mass.hpp"

namespace afstab {

struct InequalityReport {
  int axis = 0;
  double mass = 0.0;
  double rhs_integral = 0.0;  // (1/16 pi) int |hess u|^2/|grad u| + R |grad u| dV
  double hessian_l2 = 0.0;    // int |hess u|^2 dV
  double grad_sup = 0.0;
  double slack = 0.0;
  double eps_grad = 0.0;
  double excluded_fraction = 0.0;  // floor-excluded share of the unflagged volume
  double boundary_fraction = 0.0;  // share of the box volume in flagged layers
  double min_integrand = 0.0;
};

/// sup |grad u| over unflagged nodes.
inline double grad_sup(const HarmonicTriple& t, int axis) {
  double s = 0.0;
  t.grid.for_each_node([&](int i, int j, int k, size_t idx) {
    if (!t.flagged(i, j, k)) s = std::max(s, t.grad_norm(axis, idx));
  });
  return s;
}

inline double default_eps_grad(const HarmonicTriple& t, int axis, double relative = 1e-6) {
  return relative * grad_sup(t, axis);
}

namespace detail {

inline void check_triple(const HarmonicTriple& t, const MetricChart& chart, int axis) {
  if (!same_chart(t.chart, chart)) throw MismatchedChart("harmonic triple was solved on a different chart");
  if (axis < 0 || axis > 2) throw InvalidArgument("axis must be 0, 1 or 2");
  if (!t.solved[axis]) throw InvalidArgument("requested axis was not solved");
}

}  // namespace detail

/// Evaluates the integrand on node-centred cells with sqrt(det g) h^3 weights.
/// `mass` may be supplied to skip the quadrature.
inline InequalityReport mass_inequality_rhs(const HarmonicTriple& t, const MetricChart& chart, int axis,
                                            double eps_grad, std::optional<double> mass = std::nullopt) {
  detail::check_triple(t, chart, axis);
  if (!(eps_grad > 0.0)) throw InvalidArgument("eps_grad must be positive");
  InequalityReport rep;
  rep.axis = axis;
  rep.eps_grad = eps_grad;
  rep.mass = mass ? *mass
                  : adm_mass(chart, default_mass_radii(chart), ExtrapolationModel::for_decay(chart.decay))
                        .extrapolated;
  const Grid& g = t.grid;
  const double h3 = g.h() * g.h() * g.h();
  std::vector<double> rhs(g.size(), 0.0), hl2(g.size(), 0.0), vol(g.size(), 0.0), excl(g.size(), 0.0);
  size_t flagged = 0;
  rep.min_integrand = std::numeric_limits<double>::infinity();
  g.for_each_node([&](int i, int j, int k, size_t idx) {
    if (t.flagged(i, j, k)) {
      ++flagged;
      return;
    }
    const double dv = t.metric.sqrt_det[idx] * h3;
    vol[idx] = dv;
    const double gn = t.grad_norm(axis, idx);
    rep.grad_sup = std::max(rep.grad_sup, gn);
    const double h2 = t.hess_norm2(axis, idx);
    hl2[idx] = h2 * dv;
    if (gn < eps_grad) {
      excl[idx] = dv;
      return;
    }
    const double r = curvature_at(chart, g.node(i, j, k)).scalar;
    const double f = h2 / gn + r * gn;
    rep.min_integrand = std::min(rep.min_integrand, f);
    rhs[idx] = f * dv;
  });
  rep.rhs_integral = pairwise_sum(rhs) / (16.0 * M_PI);
  rep.hessian_l2 = pairwise_sum(hl2);
  rep.slack = rep.mass - rep.rhs_integral;
  const double v = pairwise_sum(vol);
  rep.excluded_fraction = v > 0.0 ? pairwise_sum(excl) / v : 0.0;
  rep.boundary_fraction = static_cast<double>(flagged) / static_cast<double>(g.size());
  return rep;
}

struct KatoComparison {
  double lhs = 0.0;  // int |grad sqrt|grad u||^2 dV
  double rhs = 0.0;  // int |hess u|^2 / (4 |grad u|) dV
  double ratio() const { return rhs > 0.0 ? lhs / rhs : 0.0; }
};

inline KatoComparison refined_kato_check(const HarmonicTriple& t, const MetricChart& chart, int axis,
                                         double eps_grad) {
  detail::check_triple(t, chart, axis);
  if (!(eps_grad > 0.0)) throw InvalidArgument("eps_grad must be positive");
  const Grid& g = t.grid;
  std::vector<double> s(g.size());
  for (size_t idx = 0; idx < g.size(); ++idx) s[idx] = std::sqrt(t.grad_norm(axis, idx));
  std::array<std::vector<double>, 3> ds;
  for (int a = 0; a < 3; ++a) ds[a] = fd::partial(g, s, a);
  const double h3 = g.h() * g.h() * g.h();
  std::vector<double> l(g.size(), 0.0), r(g.size(), 0.0);
  g.for_each_node([&](int i, int j, int k, size_t idx) {
    // one more layer than the triple flags: s is itself a difference quotient
    if (g.near_boundary(i, j, k, t.boundary_layers + 1)) return;
    const double gn = t.grad_norm(axis, idx);
    if (gn < eps_grad) return;
    const double dv = t.metric.sqrt_det[idx] * h3;
    const Vec3 gi = t.metric.g_inv_diag(idx);
    double q = 0.0;
    for (int a = 0; a < 3; ++a) q += gi[a] * ds[a][idx] * ds[a][idx];
    l[idx] = q * dv;
    r[idx] = t.hess_norm2(axis, idx) / (4.0 * gn) * dv;
  });
  return {pairwise_sum(l), pairwise_sum(r)};
}

// ---------------------------------------------------------------------------
// Relaxed certificate: psi = max(0, c |X|^2 + div X - R), X = grad w

struct XSpec {
  bool zero = true;
  Bump w;               // compactly supported potential when !zero
  double coefficient = 1.0;
  double decay = std::numeric_limits<double>::infinity();  // compact support

  static XSpec none() { return {}; }
  static XSpec gradient_of(const Bump& w, double c = 1.0) {
    XSpec x;
    x.zero = false;
    x.w = w;
    x.coefficient = c;
    return x;
  }
};

struct RelaxedScalarCertificate {
  double psi_l1 = 0.0;
  double psi_support_radius = 0.0;
  bool holds_pointwise_outside = true;
  double coefficient = 1.0;
  int n_nodes = 0;
};

/// c |X|^2_g + div_g X at x for X^a = g^{ab} d_b w, from metric derivatives.
inline double x_terms(const MetricChart& chart, const XSpec& spec, const Vec3& x) {
  if (spec.zero) return 0.0;
  const ScalarJet w = spec.w.jet(x);
  const MetricSample s = metric_at(chart, x);
  const Mat3 gi = s.g.inverse();
  const Vec3 xv = gi * w.grad;
  double div = (gi.cwiseProduct(w.hess)).sum();
  for (int a = 0; a < 3; ++a) {
    // d_a g^{ab} = -g^{ac} d_a g_cd g^{db}
    const Mat3 dgi = -gi * s.dg[a] * gi;
    div += dgi.row(a).dot(w.grad);
    // Gamma^b_{ba} = 1/2 tr(g^{-1} d_a g)
    div += 0.5 * (gi * s.dg[a]).trace() * xv[a];
  }
  return spec.coefficient * w.grad.dot(xv) + div;
}

inline RelaxedScalarCertificate relaxed_scalar_certificate(const MetricChart& chart, const XSpec& spec,
                                                           const Grid& grid) {
  RelaxedScalarCertificate c;
  c.coefficient = spec.coefficient;
  const double h3 = grid.h() * grid.h() * grid.h();
  std::vector<double> cell(grid.size(), 0.0);
  double support = 0.0;
  grid.for_each_node([&](int i, int j, int k, size_t idx) {
    if (grid.on_boundary(i, j, k)) return;
    const Vec3 x = grid.node(i, j, k);
    const double r = curvature_at(chart, x).scalar;
    const double psi = std::max(0.0, x_terms(chart, spec, x) - r);
    if (psi < 1e-12) return;
    cell[idx] = psi * std::sqrt(metric_at(chart, x).g.determinant()) * h3;
    support = std::max(support, x.norm());
  });
  c.psi_l1 = pairwise_sum(cell);
  c.psi_support_radius = support;
  c.holds_pointwise_outside = support < 0.5 * grid.r_out();
  c.n_nodes = grid.n();
  return c;
}

// ---------------------------------------------------------------------------
// Richardson extrapolation over grids with h halving

struct RichardsonEstimate {
  double value = 0.0;
  double error = 0.0;  // size of the last correction plus order uncertainty
  double order = 2.0;  // observed when three levels are given
};

inline RichardsonEstimate richardson(const std::vector<double>& coarse_to_fine, double assumed_order = 2.0) {
  const size_t n = coarse_to_fine.size();
  if (n < 2) throw InvalidArgument("Richardson extrapolation needs two grid levels");
  const double f = coarse_to_fine[n - 1], c = coarse_to_fine[n - 2];
  RichardsonEstimate e;
  e.order = assumed_order;
  auto extrap = [&](double p) { return f + (f - c) / (std::pow(2.0, p) - 1.0); };
  e.value = extrap(assumed_order);
  e.error = std::abs(e.value - f);
  if (n >= 3) {
    const double cc = coarse_to_fine[n - 3];
    const double ratio = (cc - c) / (c - f);
    // coarsest level outside the asymptotic range: keep the two-level estimate
    if (std::isfinite(ratio) && ratio > 1.0) {
      e.order = std::clamp(std::log2(ratio), 0.5, 6.0);
      const double v = extrap(e.order);
      e.error = std::max(e.error, std::abs(v - f)) + std::abs(v - e.value);
      e.value = v;
    }
  }
  return e;
}

// ---------------------------------------------------------------------------

inline json to_json(const InequalityReport& r) {
  json j;
  j["axis"] = r.axis + 1;
  j["mass"] = json_number(r.mass);
  j["rhs_integral"] = json_number(r.rhs_integral);
  j["hessian_l2"] = json_number(r.hessian_l2);
  j["grad_sup"] = json_number(r.grad_sup);
  j["slack"] = json_number(r.slack);
  j["eps_grad"] = json_number(r.eps_grad);
  j["excluded_fraction"] = json_number(r.excluded_fraction);
  j["boundary_fraction"] = json_number(r.boundary_fraction);
  j["min_integrand"] = json_number(r.min_integrand);
  return j;
}

inline json to_json(const KatoComparison& k) {
  return json{{"lhs", json_number(k.lhs)}, {"rhs", json_number(k.rhs)}, {"ratio", json_number(k.ratio())}};
}

inline json to_json(const RelaxedScalarCertificate& c) {
  json j;
  j["psi_l1"] = json_number(c.psi_l1);
  j["psi_support_radius"] = json_number(c.psi_support_radius);
  j["holds_pointwise_outside"] = c.holds_pointwise_outside;
  j["coefficient"] = json_number(c.coefficient);
  j["N"] = c.n_nodes;
  return j;
}

inline json to_json(const RichardsonEstimate& e) {
  return json{{"value", json_number(e.value)}, {"error", json_number(e.error)}, {"order", json_number(e.order)}};
}

inline CsvTable inequality_table() {
  return CsvTable({"family", "m", "N", "R_out", "mass", "rhs_integral", "hessian_l2", "grad_sup", "slack",
                   "psi_l1"});
}

inline void append_row(CsvTable& t, const MetricChart& chart, const Grid& g, const InequalityReport& r,
                       double psi_l1) {
  t.row({to_string(chart.family), fmt_double(chart.monopole()), std::to_string(g.n()), fmt_double(g.r_out()),
         fmt_double(r.mass), fmt_double(r.rhs_integral), fmt_double(r.hessian_l2), fmt_double(r.grad_sup),
         fmt_double(r.slack), fmt_double(psi_l1)});
}

}  // namespace afstab
