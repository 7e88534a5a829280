#pragma once

// ADM mass from coordinate-sphere flux integrals with large-radius
// extrapolation.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "afstab/geometry.hpp"
#include "afstab/io.hpp"
#include "afstab/sphere_quadrature.hpp"

namespace afstab {

struct MassReport {
  std::vector<double> radii;
  std::vector<double> raw_values;
  double extrapolated = 0.0;
  double fit_exponent = 1.0;
  double fit_residual = 0.0;  // rms of the fit residual
  int quadrature_order = 32;
};

/// (1/16 pi) * integral over S_r of sum_ij (d_i g_ij - d_j g_ii) nu^j dA.
inline double adm_mass_at_radius(const MetricChart& chart, double r,
                                 const SphereQuadrature& quad = SphereQuadrature()) {
  if (!(r > std::max(1.0, chart.domain.r_exc)))
    throw InvalidArgument("extraction radius must exceed max(1, r_exc)");
  if (r > chart.domain.r_out) throw OutOfDomain("extraction sphere leaves the chart box");
  const double flux = quad.integrate(r, [&](const Vec3& x, const Vec3& nu) {
    const MetricSample s = metric_at(chart, x);
    double acc = 0.0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) acc += (s.dg[i](i, j) - s.dg[j](i, i)) * nu[j];
    return acc;
  });
  return flux / (16.0 * M_PI);
}

struct ExtrapolationModel {
  std::optional<double> fixed_q;  // empty: fit q as well
  double rel_tolerance = 1e-3;

  /// q = 1 for tau = 1, else 2 tau - 1.
  static ExtrapolationModel for_decay(const Decay& d) {
    ExtrapolationModel m;
    m.fixed_q = std::abs(d.tau - 1.0) < 1e-12 ? 1.0 : 2.0 * d.tau - 1.0;
    return m;
  }
};

namespace detail {

struct LinearFit {
  double m_inf, a, rms;
};

// least squares for m(r) = m_inf + a r^{-q}
inline LinearFit fit_fixed_q(const std::vector<double>& r, const std::vector<double>& m, double q) {
  const double n = static_cast<double>(r.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < r.size(); ++i) {
    const double x = std::pow(r[i], -q);
    sx += x;
    sy += m[i];
    sxx += x * x;
    sxy += x * m[i];
  }
  const double det = n * sxx - sx * sx;
  LinearFit f;
  f.a = (n * sxy - sx * sy) / det;
  f.m_inf = (sy - f.a * sx) / n;
  double ss = 0;
  for (size_t i = 0; i < r.size(); ++i) {
    const double e = m[i] - f.m_inf - f.a * std::pow(r[i], -q);
    ss += e * e;
  }
  f.rms = std::sqrt(ss / n);
  return f;
}

}  // namespace detail

inline MassReport adm_mass(const MetricChart& chart, std::vector<double> radii,
                           const ExtrapolationModel& model,
                           const SphereQuadrature& quad = SphereQuadrature()) {
  if (radii.size() < 3) throw InvalidArgument("mass extrapolation needs at least 3 radii");
  for (size_t i = 1; i < radii.size(); ++i)
    if (!(radii[i] > radii[i - 1])) throw InvalidArgument("radii must be strictly increasing");
  MassReport rep;
  rep.radii = radii;
  rep.quadrature_order = quad.n_theta;
  for (double r : radii) rep.raw_values.push_back(adm_mass_at_radius(chart, r, quad));

  detail::LinearFit best;
  if (model.fixed_q) {
    rep.fit_exponent = *model.fixed_q;
    best = detail::fit_fixed_q(radii, rep.raw_values, rep.fit_exponent);
  } else {
    // golden-section search on q in [0.05, 4]
    double lo = 0.05, hi = 4.0;
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 80; ++it) {
      const double a = hi - gr * (hi - lo), b = lo + gr * (hi - lo);
      if (detail::fit_fixed_q(radii, rep.raw_values, a).rms <
          detail::fit_fixed_q(radii, rep.raw_values, b).rms)
        hi = b;
      else
        lo = a;
    }
    rep.fit_exponent = 0.5 * (lo + hi);
    best = detail::fit_fixed_q(radii, rep.raw_values, rep.fit_exponent);
  }
  rep.extrapolated = best.m_inf;
  rep.fit_residual = best.rms;
  const double scale = std::max(std::abs(best.m_inf), 1e-14);
  if (best.rms > model.rel_tolerance * scale)
    throw FitFailure("extrapolation residual " + fmt_double(best.rms) +
                     " exceeds tolerance; the family decays slower than declared");
  return rep;
}

/// Default extraction radii {20, 40, 80, 160}, clipped to the chart box.
inline std::vector<double> default_mass_radii(const MetricChart& chart) {
  std::vector<double> r;
  for (double x : {20.0, 40.0, 80.0, 160.0})
    if (x <= chart.domain.r_out) r.push_back(x);
  return r;
}

/// Integrability of R_g: L^1(g) norm over the ball of radius r_max and the
/// share carried by the outer half shell (should vanish for our families).
struct IntegrabilityReport {
  double l1 = 0.0;
  double outer_shell = 0.0;
  bool integrable = true;
};

inline IntegrabilityReport scalar_curvature_l1(const MetricChart& chart, double r_max,
                                               int radial_order = 96,
                                               const SphereQuadrature& quad = SphereQuadrature(24, 48)) {
  IntegrabilityReport rep;
  const GaussLegendre gl(radial_order);
  auto shell = [&](double r0, double r1) {
    double acc = 0.0;
    for (int i = 0; i < radial_order; ++i) {
      const double r = 0.5 * (r0 + r1) + 0.5 * (r1 - r0) * gl.nodes[i];
      const double w = 0.5 * (r1 - r0) * gl.weights[i];
      acc += w * quad.integrate(r, [&](const Vec3& x, const Vec3&) {
        const double phi = chart.phi(x).value;
        return std::abs(curvature_at(chart, x).scalar) * std::pow(phi, 6);
      });
    }
    return acc;
  };
  // split at the core radius so the quadrature sees smooth pieces
  const double rc = std::min(chart.core_radius(), 0.5 * r_max);
  rep.outer_shell = shell(0.5 * r_max, r_max);
  rep.l1 = shell(0.0, rc) + shell(rc, 0.5 * r_max) + rep.outer_shell;
  rep.integrable = rep.outer_shell <= 1e-6 * std::max(rep.l1, 1e-300) || rep.outer_shell < 1e-12;
  return rep;
}

inline json to_json(const MassReport& r) {
  json j;
  j["radii"] = r.radii;
  j["raw_values"] = r.raw_values;
  j["extrapolated"] = json_number(r.extrapolated);
  j["fit_exponent"] = json_number(r.fit_exponent);
  j["fit_residual"] = json_number(r.fit_residual);
  j["quadrature_order"] = r.quadrature_order;
  return j;
}

inline CsvTable to_csv(const MassReport& r) {
  CsvTable t({"r", "m_r", "abs_err_vs_extrapolated"});
  for (size_t i = 0; i < r.radii.size(); ++i)
    t.row({fmt_double(r.radii[i]), fmt_double(r.raw_values[i]),
           fmt_double(std::abs(r.raw_values[i] - r.extrapolated))});
  return t;
}

}  // namespace afstab
