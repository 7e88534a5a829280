#pragma once

// Test-only oracles. Nothing here calls into the derivative or curvature
// paths of the library; only point values of g or phi are sampled.

#include <array>
#include <cmath>
#include <functional>

#include "afstab/geometry.hpp"

namespace afstab::oracle {

/// Scalar curvature from 4th-order finite differences of sampled metric values.
/// Christoffels are differenced numerically rather than via d(g^{-1}) and ddg.
inline double fd_scalar_curvature(const std::function<Mat3(const Vec3&)>& gfun, const Vec3& x,
                                  double h) {
  auto d1 = [&](const std::function<Mat3(const Vec3&)>& f, const Vec3& p, int k) {
    Vec3 e = Vec3::Zero();
    e[k] = h;
    return Mat3((-f(p + 2 * e) + 8 * f(p + e) - 8 * f(p - e) + f(p - 2 * e)) / (12 * h));
  };
  // Gamma^k_ij at p, packed as gam(k) matrices
  auto gamma = [&](const Vec3& p) {
    std::array<Mat3, 3> dg;
    for (int k = 0; k < 3; ++k) dg[k] = d1(gfun, p, k);
    const Mat3 gi = gfun(p).inverse();
    std::array<Mat3, 3> out;
    for (int k = 0; k < 3; ++k)
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          double acc = 0;
          for (int l = 0; l < 3; ++l) acc += gi(k, l) * (dg[i](j, l) + dg[j](i, l) - dg[l](i, j));
          out[k](i, j) = 0.5 * acc;
        }
    return out;
  };
  const auto gam = gamma(x);
  // dgam[m][k] = d_m Gamma^k
  std::array<std::array<Mat3, 3>, 3> dgam;
  for (int m = 0; m < 3; ++m) {
    Vec3 e = Vec3::Zero();
    e[m] = h;
    const auto a = gamma(x + 2 * e), b = gamma(x + e), c = gamma(x - e), d = gamma(x - 2 * e);
    for (int k = 0; k < 3; ++k) dgam[m][k] = (-a[k] + 8 * b[k] - 8 * c[k] + d[k]) / (12 * h);
  }
  Mat3 ric = Mat3::Zero();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) {
        ric(i, j) += dgam[k][k](i, j) - dgam[j][k](i, k);
        for (int l = 0; l < 3; ++l)
          ric(i, j) += gam[k](k, l) * gam[l](i, j) - gam[k](j, l) * gam[l](i, k);
      }
  return (gfun(x).inverse().cwiseProduct(ric)).sum();
}

/// Metric value only; used as the sampled input of the FD oracle.
inline std::function<Mat3(const Vec3&)> metric_values(const MetricChart& chart) {
  return [&chart](const Vec3& p) {
    const double f = chart.phi(p).value;
    return Mat3(f * f * f * f * Mat3::Identity());
  };
}

/// Euclidean Laplacian of phi by a 4th-order 3D finite-difference stencil on phi values.
inline double fd_flat_laplacian(const std::function<double(const Vec3&)>& f, const Vec3& x,
                                double h) {
  double lap = 0;
  for (int k = 0; k < 3; ++k) {
    Vec3 e = Vec3::Zero();
    e[k] = h;
    lap += (-f(x + 2 * e) + 16 * f(x + e) - 30 * f(x) + 16 * f(x - e) - f(x - 2 * e)) / (12 * h * h);
  }
  return lap;
}

/// Composite Simpson rule on [a, b] with n (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n = 2000) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4 : 2);
  return s * h / 3;
}

}  // namespace afstab::oracle

namespace afstab::oracle {

/// Radial profile h of the harmonic function h(r) x^i / r for g = phi^4 delta
/// with radial phi:  (phi^2 r^2 h')' = 2 phi^2 h,  h ~ r at the origin,
/// normalized so h = (r - mu + mu^2/r) + o(1/r) at infinity (mu = M/2).
/// RK4 in t = ln r.
class RadialHarmonicOracle {
 public:
  RadialHarmonicOracle(const MetricChart& chart, double dt = 2e-4) : chart_(chart), dt_(dt) {
    const double rfar = 1e6;
    const double mu = 0.5 * chart.monopole();
    const double hfar = integrate_to({rfar})[0];
    scale_ = (rfar - mu + mu * mu / rfar) / hfar;
  }

  /// h at sorted radii.
  std::vector<double> operator()(const std::vector<double>& radii) const {
    auto v = integrate_to(radii);
    for (auto& x : v) x *= scale_;
    return v;
  }

 private:
  double phi(double r) const { return chart_.phi(Vec3(r, 0, 0)).value; }

  std::vector<double> integrate_to(const std::vector<double>& radii) const {
    const double r0 = 1e-5;
    double t = std::log(r0);
    double h = r0, y = phi(r0) * phi(r0) * r0 * r0;
    auto rhs = [&](double tt, double hh, double yy, double& dh, double& dy) {
      const double r = std::exp(tt), p2 = phi(r) * phi(r);
      dh = yy / (p2 * r);
      dy = r * 2 * p2 * hh;
    };
    std::vector<double> out;
    for (double target : radii) {
      const double tt = std::log(target);
      while (t < tt) {
        const double s = std::min(dt_, tt - t);
        double k1h, k1y, k2h, k2y, k3h, k3y, k4h, k4y;
        rhs(t, h, y, k1h, k1y);
        rhs(t + s / 2, h + s / 2 * k1h, y + s / 2 * k1y, k2h, k2y);
        rhs(t + s / 2, h + s / 2 * k2h, y + s / 2 * k2y, k3h, k3y);
        rhs(t + s, h + s * k3h, y + s * k3y, k4h, k4y);
        h += s / 6 * (k1h + 2 * k2h + 2 * k3h + k4h);
        y += s / 6 * (k1y + 2 * k2y + 2 * k3y + k4y);
        t += s;
      }
      out.push_back(h);
    }
    return out;
  }

  MetricChart chart_;
  double dt_;
  double scale_ = 1.0;
};

}  // namespace afstab::oracle

namespace afstab::oracle {

/// First-order L1 norm of max(0, -R) for phi = 1 + c b(|x|): with R ~ -8 c lap b,
/// the positive part integrates to 8 |c| 4 pi max_r (-r^2 b'(r)).
/// `b` is sampled by value only; b' by central differences.
inline double linear_negative_part_l1(const std::function<double(double)>& b, double c, double r_max,
                                      int samples = 200000) {
  const double dr = r_max / samples, e = 1e-6 * r_max;
  double best = 0.0;
  for (int i = 1; i < samples; ++i) {
    const double r = i * dr;
    best = std::max(best, -r * r * (b(r + e) - b(r - e)) / (2 * e));
  }
  return 8.0 * std::abs(c) * 4.0 * M_PI * best;
}

}  // namespace afstab::oracle

namespace afstab::oracle {

/// Antiderivative of (1 + m/(2r))^2: radial arclength outside the core.
inline double radial_arclength(double r, double m) { return r + m * std::log(r) - m * m / (4.0 * r); }

/// Radius reached from r0 after radial arclength L (Newton on the antiderivative).
inline double radius_after(double r0, double L, double m) {
  const double target = radial_arclength(r0, m) + L;
  double r = r0 + L;
  for (int it = 0; it < 100; ++it) {
    const double f = radial_arclength(r, m) - target;
    const double df = (1 + m / (2 * r)) * (1 + m / (2 * r));
    r -= f / df;
    if (std::abs(f) < 1e-15 * r) break;
  }
  return r;
}

}  // namespace afstab::oracle
