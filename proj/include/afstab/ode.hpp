#pragma once

// Dormand-Prince 5(4), elementary step-size control, fixed-size Eigen states.

#include <algorithm>
#include <cmath>
#include <functional>

#include <Eigen/Dense>

#include "afstab/errors.hpp"

namespace afstab {

struct OdeOptions {
  double rtol = 1e-12;
  double atol = 1e-13;
  double h0 = 1e-2;
  double h_max = 0.25;
  int max_steps = 200000;
};

/// Integrates y' = f(t, y) from t0 to t1 (t1 > t0). `observer(t, y, dy)` is
/// called at t0 and after each accepted step; returning false stops early.
template <int D, class F, class Obs>
Eigen::Matrix<double, D, 1> dopri45(F&& f, double t0, Eigen::Matrix<double, D, 1> y, double t1,
                                    const OdeOptions& opt, Obs&& observer) {
  using V = Eigen::Matrix<double, D, 1>;
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                          b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;

  double t = t0;
  double h = std::min(opt.h0, t1 - t0);
  V k1 = f(t, y);
  if (!observer(t, y, k1)) return y;
  for (int step = 0; step < opt.max_steps; ++step) {
    if (t >= t1) return y;
    h = std::min(h, t1 - t);
    const V k2 = f(t + c2 * h, V(y + h * a21 * k1));
    const V k3 = f(t + c3 * h, V(y + h * (a31 * k1 + a32 * k2)));
    const V k4 = f(t + c4 * h, V(y + h * (a41 * k1 + a42 * k2 + a43 * k3)));
    const V k5 = f(t + c5 * h, V(y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4)));
    const V k6 = f(t + h, V(y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5)));
    const V y5 = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    const V k7 = f(t + h, y5);
    const V err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    double en = 0.0;
    for (int i = 0; i < D; ++i) {
      const double sc = opt.atol + opt.rtol * std::max(std::abs(y[i]), std::abs(y5[i]));
      en = std::max(en, std::abs(err[i]) / sc);
    }
    if (en <= 1.0) {
      t = (t1 - (t + h) < 1e-14 * std::max(1.0, std::abs(t1))) ? t1 : t + h;
      y = y5;
      k1 = k7;  // FSAL
      if (!observer(t, y, k1)) return y;
    }
    const double fac = en > 0.0 ? 0.9 * std::pow(en, -0.2) : 5.0;
    h = std::min(opt.h_max, h * std::clamp(fac, 0.2, 5.0));
    if (h < 1e-14 * std::max(1.0, std::abs(t))) throw NoConvergence("integrator step size underflow");
  }
  throw NoConvergence("integrator step budget exhausted");
}

}  // namespace afstab
