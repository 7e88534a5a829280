#pragma once

#include <cmath>
#include <vector>

#include "afstab/conformal.hpp"
#include "afstab/errors.hpp"

namespace afstab {

/// Gauss-Legendre nodes and weights on [-1, 1] (Newton on the Legendre recurrence).
struct GaussLegendre {
  std::vector<double> nodes, weights;

  explicit GaussLegendre(int n) : nodes(n), weights(n) {
    if (n < 1) throw InvalidArgument("Gauss-Legendre order must be positive");
    for (int i = 0; i < (n + 1) / 2; ++i) {
      double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
      double dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
          const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        if (n == 1) p0 = 1.0;
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        const double dx = p1 / dp;
        x -= dx;
        if (std::abs(dx) < 1e-16) break;
      }
      nodes[i] = -x;
      nodes[n - 1 - i] = x;
      weights[i] = weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
  }
};

/// Product rule on the unit sphere: Gauss-Legendre in cos(theta) times the
/// trapezoid rule in the azimuth.
struct SphereQuadrature {
  int n_theta = 32;
  int n_phi = 64;
  std::vector<Vec3> directions;  // unit normals
  std::vector<double> weights;   // sum to 4 pi

  SphereQuadrature(int nt = 32, int np = 64) : n_theta(nt), n_phi(np) {
    if (np < 1) throw InvalidArgument("azimuthal order must be positive");
    const GaussLegendre gl(nt);
    const double dphi = 2.0 * M_PI / np;
    for (int i = 0; i < nt; ++i) {
      const double z = gl.nodes[i];
      const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
      for (int j = 0; j < np; ++j) {
        const double ph = (j + 0.5) * dphi;
        directions.emplace_back(s * std::cos(ph), s * std::sin(ph), z);
        weights.push_back(gl.weights[i] * dphi);
      }
    }
  }

  /// Integral of f over the sphere of radius r centred at the origin (Euclidean area element).
  template <class F>
  double integrate(double r, F&& f) const {
    double acc = 0.0;
    for (size_t k = 0; k < directions.size(); ++k) acc += weights[k] * f(r * directions[k], directions[k]);
    return acc * r * r;
  }
};

}  // namespace afstab
