#pragma once

// Closed-form metric families on a single global chart of R^3, their exact
// derivatives, curvature, and pointwise certification of the asymptotic
// flatness / curvature hypotheses.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "afstab/conformal.hpp"
#include "afstab/errors.hpp"

namespace afstab {

enum class MetricFamily { Flat, SchwarzschildIsotropic, ConformallyFlat, Perturbed };

inline std::string to_string(MetricFamily f) {
  switch (f) {
    case MetricFamily::Flat: return "Flat";
    case MetricFamily::SchwarzschildIsotropic: return "SchwarzschildIsotropic";
    case MetricFamily::ConformallyFlat: return "ConformallyFlat";
    case MetricFamily::Perturbed: return "Perturbed";
  }
  return "?";
}

inline MetricFamily family_from_string(const std::string& s) {
  for (auto f : {MetricFamily::Flat, MetricFamily::SchwarzschildIsotropic,
                 MetricFamily::ConformallyFlat, MetricFamily::Perturbed})
    if (to_string(f) == s) return f;
  throw InvalidArgument("unknown metric family '" + s + "'");
}

struct Domain {
  double r_out = 1000.0;  // box [-r_out, r_out]^3
  double r_exc = 0.0;   // excision radius, 0 disables excision
};

struct Decay {
  double b = 10.0;
  double tau = 1.0;
};

using Tensor3 = std::array<Mat3, 3>;                 // t[k](i,j)
using Tensor4 = std::array<std::array<Mat3, 3>, 3>;  // t[k][l](i,j)

struct MetricSample {
  Mat3 g;
  Tensor3 dg;   // dg[k](i,j) = d_k g_ij
  Tensor4 ddg;  // ddg[k][l](i,j) = d_k d_l g_ij
};

struct CurvatureSample {
  Vec3 point = Vec3::Zero();
  Tensor3 christoffel;  // christoffel[k](i,j) = Gamma^k_ij
  Mat3 ricci = Mat3::Zero();
  double scalar = 0.0;
};

/// A metric family on the chart box. Every family here is conformally flat,
/// g = phi^4 delta, with phi assembled from radial terms:
///
///   phi = 1 + (mass/2) * Psi_core(|x|; core_radius) + sum_k bump_k(x)
///
/// Psi_core equals 1/|x| outside core_radius (exact Schwarzschild there) and
/// is the potential of a smooth nonnegative density inside, so the chart is
/// global and R_g >= 0 away from bumps.
class MetricChart {
 public:
  MetricFamily family = MetricFamily::Flat;
  std::map<std::string, double> params;
  std::vector<Bump> bumps;  // Perturbed: compact bumps; ConformallyFlat: Gaussian
  Domain domain;
  Decay decay;

  MetricChart() = default;

  static MetricChart flat(double r_out = 1000.0) {
    MetricChart c;
    c.domain.r_out = r_out;
    return c;
  }

  static MetricChart schwarzschild(double m, double r_out = 1000.0, double core_radius = 1.0) {
    MetricChart c;
    c.family = MetricFamily::SchwarzschildIsotropic;
    c.params = {{"m", m}, {"core_radius", core_radius}};
    c.domain.r_out = r_out;
    return c;
  }

  /// phi = 1 + A/(2|x|) (cored) + gauss_amp * exp(-|x - c|^2 / gauss_width^2)
  static MetricChart conformally_flat(double monopole, double gauss_amp = 0.0,
                                      double gauss_width = 1.0, Vec3 gauss_center = Vec3::Zero(),
                                      double r_out = 1000.0, double core_radius = 1.0) {
    MetricChart c;
    c.family = MetricFamily::ConformallyFlat;
    c.params = {{"A", monopole}, {"core_radius", core_radius}, {"gauss_amp", gauss_amp},
                {"gauss_width", gauss_width}, {"gauss_cx", gauss_center.x()},
                {"gauss_cy", gauss_center.y()}, {"gauss_cz", gauss_center.z()}};
    c.domain.r_out = r_out;
    c.rebuild_bumps();
    return c;
  }

  static MetricChart perturbed(double monopole, std::vector<Bump> bumps, double r_out = 1000.0,
                               double core_radius = 1.0) {
    MetricChart c;
    c.family = MetricFamily::Perturbed;
    c.params = {{"A", monopole}, {"core_radius", core_radius}};
    for (auto& b : bumps) b.shape = BumpShape::Compact;
    c.bumps = std::move(bumps);
    c.domain.r_out = r_out;
    return c;
  }

  double param(const std::string& name, double fallback = 0.0) const {
    auto it = params.find(name);
    return it == params.end() ? fallback : it->second;
  }

  /// ConformallyFlat keeps its Gaussian bump in params; sync the bump list.
  void rebuild_bumps() {
    if (family != MetricFamily::ConformallyFlat) return;
    bumps.clear();
    const double amp = param("gauss_amp");
    if (amp != 0.0) {
      Bump b;
      b.shape = BumpShape::Gaussian;
      b.amplitude = amp;
      b.width = param("gauss_width", 1.0);
      b.center = Vec3(param("gauss_cx"), param("gauss_cy"), param("gauss_cz"));
      bumps.push_back(b);
    }
  }

  /// Coefficient M of the 1/|x| monopole in phi = 1 + M/(2|x|) + ...; equals the ADM mass.
  double monopole() const {
    switch (family) {
      case MetricFamily::Flat: return 0.0;
      case MetricFamily::SchwarzschildIsotropic: return param("m");
      default: return param("A");
    }
  }

  double core_radius() const { return param("core_radius", 1.0); }

  /// Radius beyond which phi is exactly 1 + M/(2|x|).
  double exterior_radius() const {
    double r = monopole() != 0.0 ? core_radius() : 0.0;
    for (const auto& b : bumps) r = std::max(r, b.support_radius());
    return r;
  }

  bool in_box(const Vec3& x, double slack = 0.0) const {
    const double lim = domain.r_out * (1.0 + 1e-12) + slack;
    return std::abs(x.x()) <= lim && std::abs(x.y()) <= lim && std::abs(x.z()) <= lim;
  }

  void check_point(const Vec3& x) const {
    if (!in_box(x)) throw OutOfDomain("point outside the chart box");
    if (domain.r_exc > 0.0 && x.norm() <= domain.r_exc)
      throw ExcisedPoint("point inside the excision radius");
  }

  /// Conformal factor with gradient and Hessian.
  ScalarJet phi(const Vec3& x) const {
    ScalarJet j;
    j.value = 1.0;
    const double mono = monopole();
    if (mono != 0.0) {
      ScalarJet core = expand_radial(profile::core_potential(x.norm(), core_radius()), x);
      core *= 0.5 * mono;
      j += core;
    }
    for (const auto& b : bumps) j += b.jet(x);
    return j;
  }

  /// Euclidean Laplacian of phi evaluated symbolically (test oracle for the curvature path).
  double flat_laplacian_phi(const Vec3& x) const {
    double lap = 0.0;
    const double mono = monopole();
    if (mono != 0.0)
      lap += 0.5 * mono * (-4.0 * M_PI * profile::core_density(x.norm(), core_radius()));
    for (const auto& b : bumps) lap += b.jet(x).laplacian();
    return lap;
  }
};

/// g_ij, d_k g_ij, d_k d_l g_ij in closed form.
inline MetricSample metric_at(const MetricChart& chart, const Vec3& x) {
  chart.check_point(x);
  MetricSample s;
  const ScalarJet p = chart.phi(x);
  const double f = p.value;
  const double f2 = f * f, f3 = f2 * f;
  s.g = f2 * f2 * Mat3::Identity();
  for (int k = 0; k < 3; ++k) {
    s.dg[k] = 4.0 * f3 * p.grad[k] * Mat3::Identity();
    for (int l = k; l < 3; ++l) {
      const double c = 12.0 * f2 * p.grad[k] * p.grad[l] + 2.0 * f3 * (p.hess(k, l) + p.hess(l, k));
      s.ddg[k][l] = s.ddg[l][k] = c * Mat3::Identity();
    }
  }
  return s;
}

inline Tensor3 christoffel_from(const Mat3& ginv, const Tensor3& dg) {
  Tensor3 gam;
  for (int k = 0; k < 3; ++k) {
    gam[k].setZero();
    for (int i = 0; i < 3; ++i)
      for (int j = i; j < 3; ++j) {
        double acc = 0.0;
        for (int l = 0; l < 3; ++l)
          acc += ginv(k, l) * (dg[i](j, l) + dg[j](i, l) - dg[l](i, j));
        gam[k](i, j) = gam[k](j, i) = 0.5 * acc;
      }
  }
  return gam;
}

inline Tensor3 christoffel_at(const MetricChart& chart, const Vec3& x) {
  const MetricSample s = metric_at(chart, x);
  return christoffel_from(s.g.inverse(), s.dg);
}

/// Christoffel symbols, Ricci tensor and scalar curvature from g, dg, ddg
/// with the standard coordinate formulas.
inline CurvatureSample curvature_at(const MetricChart& chart, const Vec3& x) {
  const MetricSample s = metric_at(chart, x);
  const Mat3 ginv = s.g.inverse();
  CurvatureSample c;
  c.point = x;
  c.christoffel = christoffel_from(ginv, s.dg);
  const auto& gam = c.christoffel;

  // dginv[m](k,l) = d_m g^{kl}
  Tensor3 dginv;
  for (int m = 0; m < 3; ++m) dginv[m] = -ginv * s.dg[m] * ginv;

  // dgam[m][k](i,j) = d_m Gamma^k_ij
  std::array<Tensor3, 3> dgam;
  for (int m = 0; m < 3; ++m)
    for (int k = 0; k < 3; ++k)
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          double acc = 0.0;
          for (int l = 0; l < 3; ++l) {
            acc += dginv[m](k, l) * (s.dg[i](j, l) + s.dg[j](i, l) - s.dg[l](i, j));
            acc += ginv(k, l) * (s.ddg[m][i](j, l) + s.ddg[m][j](i, l) - s.ddg[m][l](i, j));
          }
          dgam[m][k](i, j) = 0.5 * acc;
        }

  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double r = 0.0;
      for (int k = 0; k < 3; ++k) {
        r += dgam[k][k](i, j) - dgam[j][k](i, k);
        for (int l = 0; l < 3; ++l)
          r += gam[k](k, l) * gam[l](i, j) - gam[k](j, l) * gam[l](i, k);
      }
      c.ricci(i, j) = r;
    }
  c.scalar = (ginv.cwiseProduct(c.ricci)).sum();
  return c;
}

// ---------------------------------------------------------------------------
// Hypothesis checks

/// Sample points on spheres of the given radii (Fibonacci lattice per sphere).
struct SampleSpec {
  std::vector<double> radii;
  int points_per_sphere = 64;
  bool include_origin = false;
};

inline std::vector<Vec3> fibonacci_sphere(int n, double r) {
  std::vector<Vec3> pts;
  pts.reserve(n);
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  for (int k = 0; k < n; ++k) {
    const double z = 1.0 - (2.0 * k + 1.0) / n;
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double th = golden * k;
    pts.emplace_back(r * rho * std::cos(th), r * rho * std::sin(th), r * z);
  }
  return pts;
}

inline std::vector<Vec3> sample_points(const SampleSpec& spec) {
  std::vector<Vec3> pts;
  if (spec.include_origin) pts.emplace_back(Vec3::Zero());
  for (double r : spec.radii) {
    auto s = fibonacci_sphere(spec.points_per_sphere, r);
    pts.insert(pts.end(), s.begin(), s.end());
  }
  return pts;
}

struct AfCheck {
  bool af_ok = true;
  double fitted_tau = std::numeric_limits<double>::infinity();  // infinite when g == delta
  double worst_ratio = 0.0;
};

/// Checks |d^beta (g - delta)| <= b |x|^{-tau-|beta|} for |beta| <= 2 at every
/// sample and fits the decay exponent of sup_{|x|=r} |g - delta| by log-log
/// regression.
inline AfCheck verify_asymptotic_flatness(const MetricChart& chart, const SampleSpec& spec) {
  AfCheck out;
  std::vector<double> lr, lsup;
  for (double r : spec.radii) {
    double sup0 = 0.0;
    for (const Vec3& x : fibonacci_sphere(spec.points_per_sphere, r)) {
      const MetricSample s = metric_at(chart, x);
      const double rn = x.norm();
      const double m0 = (s.g - Mat3::Identity()).cwiseAbs().maxCoeff();
      double m1 = 0.0, m2 = 0.0;
      for (int k = 0; k < 3; ++k) {
        m1 = std::max(m1, s.dg[k].cwiseAbs().maxCoeff());
        for (int l = 0; l < 3; ++l) m2 = std::max(m2, s.ddg[k][l].cwiseAbs().maxCoeff());
      }
      const double b = chart.decay.b, tau = chart.decay.tau;
      const double ratio = std::max({m0 / (b * std::pow(rn, -tau)),
                                     m1 / (b * std::pow(rn, -tau - 1.0)),
                                     m2 / (b * std::pow(rn, -tau - 2.0))});
      out.worst_ratio = std::max(out.worst_ratio, ratio);
      sup0 = std::max(sup0, m0);
    }
    if (sup0 > 0.0) {
      lr.push_back(std::log(r));
      lsup.push_back(std::log(sup0));
    }
  }
  out.af_ok = out.worst_ratio <= 1.0;
  if (lr.size() >= 2) {
    const double n = static_cast<double>(lr.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < lr.size(); ++i) {
      sx += lr[i];
      sy += lsup[i];
      sxx += lr[i] * lr[i];
      sxy += lr[i] * lsup[i];
    }
    out.fitted_tau = -(n * sxy - sx * sy) / (n * sxx - sx * sx);
  }
  return out;
}

struct HypothesisCertificate {
  double scalar_min = 0.0;
  double ricci_kappa = 0.0;
  bool af_ok = true;
  std::vector<Vec3> witness_points;  // [argmin R, argmin Ricci eigenvalue]
};

/// Smallest eigenvalue of Ric relative to g (Ric v = lambda g v).
inline double min_generalized_eigenvalue(const Mat3& ricci, const Mat3& g) {
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat3> es(0.5 * (ricci + ricci.transpose()), g,
                                                    Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline HypothesisCertificate certify_hypotheses(const MetricChart& chart, const SampleSpec& spec) {
  HypothesisCertificate cert;
  cert.scalar_min = std::numeric_limits<double>::infinity();
  double lam_min = std::numeric_limits<double>::infinity();
  Vec3 w_scalar = Vec3::Zero(), w_ricci = Vec3::Zero();
  for (const Vec3& x : sample_points(spec)) {
    const CurvatureSample c = curvature_at(chart, x);
    if (c.scalar < cert.scalar_min) {
      cert.scalar_min = c.scalar;
      w_scalar = x;
    }
    const double lam = min_generalized_eigenvalue(c.ricci, metric_at(chart, x).g);
    if (lam < lam_min) {
      lam_min = lam;
      w_ricci = x;
    }
  }
  cert.ricci_kappa = std::max(0.0, -0.5 * lam_min);
  SampleSpec far = spec;
  far.radii.clear();
  for (double r : spec.radii)
    if (r >= 2.0) far.radii.push_back(r);
  cert.af_ok = verify_asymptotic_flatness(chart, far).af_ok;
  cert.witness_points = {w_scalar, w_ricci};
  return cert;
}

/// Default certification sampling: the origin plus spheres out to 0.9 r_out.
inline SampleSpec default_certification_sampling(const MetricChart& chart, int per_sphere = 96) {
  SampleSpec s;
  s.include_origin = true;
  s.points_per_sphere = per_sphere;
  const double rmax = 0.9 * chart.domain.r_out;
  for (double r = 0.125; r <= rmax; r *= 1.25) s.radii.push_back(r);
  return s;
}

}  // namespace afstab
