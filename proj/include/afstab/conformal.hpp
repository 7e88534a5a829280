#pragma once

// Radial building blocks for conformal factors phi(x) with closed-form
// first and second derivatives.
//
// A radial function f(|y|) is carried as the triple (f, A, B) with
//   A = f'(r) / r,   B = (f''(r) - f'(r) / r) / r^2,
// so that  grad f = A y  and  hess f = A I + B y y^T.  Both A and B stay
// finite at r = 0 for every profile below.

#include <cmath>
#include <limits>

#include <Eigen/Dense>

namespace afstab {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct RadialJet {
  double value = 0.0;
  double a = 0.0;  // f'/r
  double b = 0.0;  // (f'' - f'/r)/r^2
};

/// Value, gradient and Hessian of a scalar at one point.
struct ScalarJet {
  double value = 0.0;
  Vec3 grad = Vec3::Zero();
  Mat3 hess = Mat3::Zero();

  ScalarJet& operator+=(const ScalarJet& o) {
    value += o.value;
    grad += o.grad;
    hess += o.hess;
    return *this;
  }
  ScalarJet& operator*=(double s) {
    value *= s;
    grad *= s;
    hess *= s;
    return *this;
  }
  double laplacian() const { return hess.trace(); }
};

inline ScalarJet expand_radial(const RadialJet& j, const Vec3& y) {
  ScalarJet out;
  out.value = j.value;
  out.grad = j.a * y;
  out.hess = j.a * Mat3::Identity() + j.b * (y * y.transpose());
  return out;
}

namespace profile {

// Potential of a unit-charge ball with density proportional to
// (1 - r^2/a^2)^3, normalized so that Psi = 1/r for r >= a.
// The density is C^2 across r = a, so Psi is C^4.
inline constexpr double kCoreK = 315.0 / 16.0;
inline constexpr double kCoreF1 = 187.0 / 128.0;

inline RadialJet core_potential(double r, double a) {
  if (r >= a) {
    const double r3 = r * r * r;
    return {1.0 / r, -1.0 / r3, 3.0 / (r3 * r * r)};
  }
  const double s2 = (r / a) * (r / a);
  const double a3 = a * a * a;
  const double f = kCoreK * (s2 / 6.0 - 3.0 * s2 * s2 / 20.0 + s2 * s2 * s2 / 14.0 -
                             s2 * s2 * s2 * s2 / 72.0);
  const double q =
      kCoreK * (1.0 / 3.0 - 3.0 * s2 / 5.0 + 3.0 * s2 * s2 / 7.0 - s2 * s2 * s2 / 9.0);
  RadialJet j;
  j.value = (1.0 + kCoreF1 - f) / a;
  j.a = -q / a3;
  j.b = kCoreK * (6.0 / 5.0 - 12.0 * s2 / 7.0 + 2.0 * s2 * s2 / 3.0) / (a3 * a * a);
  return j;
}

/// Normalized mass density of core_potential: Laplacian(Psi) = -4 pi rho.
inline double core_density(double r, double a) {
  if (r >= a) return 0.0;
  const double s2 = (r / a) * (r / a);
  const double w = 1.0 - s2;
  return kCoreK * w * w * w / (4.0 * M_PI * a * a * a);
}

// Profiles in t = r^2 / w^2; returns (p, dp/dt, d2p/dt2).
struct TProfile {
  double p, dp, ddp;
};

inline TProfile gaussian_t(double t) {
  const double e = std::exp(-t);
  return {e, -e, e};
}

/// exp(1 - 1/(1 - t)) on t < 1, zero outside; C-infinity with p(0) = 1.
inline TProfile compact_t(double t) {
  if (t >= 1.0) return {0.0, 0.0, 0.0};
  const double u = 1.0 / (1.0 - t);
  const double p = std::exp(1.0 - u);
  return {p, -p * u * u, p * (u * u * u * u - 2.0 * u * u * u)};
}

inline RadialJet from_t_profile(const TProfile& tp, double width) {
  const double w2 = width * width;
  return {tp.p, 2.0 * tp.dp / w2, 4.0 * tp.ddp / (w2 * w2)};
}

}  // namespace profile

enum class BumpShape { Gaussian, Compact };

/// amplitude * shape(|x - center| / width)
struct Bump {
  BumpShape shape = BumpShape::Compact;
  double amplitude = 0.0;
  double width = 1.0;
  Vec3 center = Vec3::Zero();

  ScalarJet jet(const Vec3& x) const {
    const Vec3 y = x - center;
    const double t = y.squaredNorm() / (width * width);
    const auto tp = shape == BumpShape::Gaussian ? profile::gaussian_t(t) : profile::compact_t(t);
    ScalarJet j = expand_radial(profile::from_t_profile(tp, width), y);
    j *= amplitude;
    return j;
  }

  /// Chart radius outside of which the bump vanishes identically (infinite for Gaussians).
  double support_radius() const {
    return shape == BumpShape::Compact ? center.norm() + width
                                       : std::numeric_limits<double>::infinity();
  }
};

}  // namespace afstab
