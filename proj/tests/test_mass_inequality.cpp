#include <gtest/gtest.h>

#include <cmath>

#include "afstab/mass_inequality.hpp"
#include "oracles.hpp"

using namespace afstab;

namespace {

HarmonicTriple axis_x(const MetricChart& chart, int n, double r_out) {
  TripleOptions o;
  o.axes = {true, false, false};
  return build_harmonic_triple(chart, Grid(n, r_out), o);
}

Bump compact(double amp, double width, Vec3 c = Vec3::Zero()) {
  Bump b;
  b.shape = BumpShape::Compact;
  b.amplitude = amp;
  b.width = width;
  b.center = c;
  return b;
}

}  // namespace

TEST(MassInequality, FlatIsTrivial) {
  const auto chart = MetricChart::flat();
  const auto t = axis_x(chart, 33, 10.0);
  const auto r = mass_inequality_rhs(t, chart, 0, 1e-6);
  EXPECT_EQ(r.mass, 0.0);
  EXPECT_LT(r.rhs_integral, 1e-18);
  EXPECT_LT(r.hessian_l2, 1e-18);
  EXPECT_NEAR(r.grad_sup, 1.0, 1e-12);
  EXPECT_LT(std::abs(r.slack), 1e-18);
  EXPECT_EQ(r.excluded_fraction, 0.0);
}

TEST(MassInequality, SchwarzschildRun) {
  const double m = 0.2;
  const auto chart = MetricChart::schwarzschild(m);
  const auto t = axis_x(chart, 65, 20.0);
  const double eps = default_eps_grad(t, 0);
  const auto r = mass_inequality_rhs(t, chart, 0, eps);
  EXPECT_NEAR(r.mass, m, 1e-3 * m);
  EXPECT_GE(r.rhs_integral, 0.0);
  EXPECT_GE(r.min_integrand, 0.0);
  EXPECT_LE(r.rhs_integral, r.mass * 1.05);
  EXPECT_LE(r.hessian_l2, 16 * M_PI * r.grad_sup * r.mass * 1.1);
  EXPECT_EQ(r.excluded_fraction, 0.0);
  EXPECT_GT(r.boundary_fraction, 0.0);
  EXPECT_LT(r.boundary_fraction, 1.0);

  // halving the floor leaves the integral alone
  const auto r2 = mass_inequality_rhs(t, chart, 0, 0.5 * eps, r.mass);
  EXPECT_LT(std::abs(r2.rhs_integral - r.rhs_integral), 1e-3 * r.rhs_integral);

  EXPECT_THROW(mass_inequality_rhs(t, MetricChart::schwarzschild(0.1), 0, eps), MismatchedChart);
  EXPECT_THROW(mass_inequality_rhs(t, chart, 0, 0.0), InvalidArgument);
  EXPECT_THROW(mass_inequality_rhs(t, chart, 1, eps), InvalidArgument);
}

TEST(MassInequality, HessianL2FallsWithMass) {
  double prev = 1e300;
  for (double m : {0.2, 0.1, 0.05}) {
    const auto chart = MetricChart::schwarzschild(m);
    const auto t = axis_x(chart, 33, 20.0);
    const auto r = mass_inequality_rhs(t, chart, 0, 1e-6, m);
    EXPECT_LT(r.hessian_l2, prev);
    EXPECT_LE(r.hessian_l2, 16 * M_PI * r.grad_sup * m * 1.1);
    prev = r.hessian_l2;
  }
}

TEST(MassInequality, FloorExcludesCells) {
  const auto chart = MetricChart::schwarzschild(0.1);
  const auto t = axis_x(chart, 17, 10.0);
  const auto r = mass_inequality_rhs(t, chart, 0, 10.0, 0.1);
  EXPECT_DOUBLE_EQ(r.excluded_fraction, 1.0);
  EXPECT_EQ(r.rhs_integral, 0.0);
}

TEST(Kato, FlatIsZero) {
  const auto chart = MetricChart::flat();
  const auto k = refined_kato_check(axis_x(chart, 33, 10.0), chart, 0, 1e-6);
  EXPECT_LT(k.lhs, 1e-20);
  EXPECT_LT(k.rhs, 1e-18);
}

TEST(Kato, HoldsOnCurvedFamilies) {
  for (const auto& chart : {MetricChart::schwarzschild(0.2),
                            MetricChart::conformally_flat(0.1, 0.05, 2.0, Vec3(1, 0.5, 0))}) {
    const auto k = refined_kato_check(axis_x(chart, 33, 20.0), chart, 0, 1e-6);
    EXPECT_GT(k.rhs, 0.0);
    EXPECT_LT(k.lhs, k.rhs);
  }
}

TEST(RelaxedCertificate, VanishesForNonnegativeCurvature) {
  const Grid g(33, 8.0);
  EXPECT_EQ(relaxed_scalar_certificate(MetricChart::flat(), XSpec::none(), g).psi_l1, 0.0);
  EXPECT_EQ(relaxed_scalar_certificate(MetricChart::schwarzschild(0.2), XSpec::none(), g).psi_l1, 0.0);
}

TEST(RelaxedCertificate, GenericXTermsMatchConformalFormula) {
  // for g = phi^4 delta and X = grad w: c|X|^2 + div X = phi^-4 (c |dw|^2 + lap w + 2 dlog(phi).dw)
  const auto chart = MetricChart::perturbed(0.3, {compact(0.2, 1.5, Vec3(0.5, 0, 0))});
  const XSpec spec = XSpec::gradient_of(compact(0.7, 2.5, Vec3(0, 0.3, 0)), 0.6);
  for (const Vec3& x : {Vec3(0.4, 0.2, -0.3), Vec3(1.1, -0.7, 0.9), Vec3(-1.5, 1.0, 0.2)}) {
    const auto p = chart.phi(x);
    const auto w = spec.w.jet(x);
    const double ref = std::pow(p.value, -4) *
                       (0.6 * w.grad.squaredNorm() + w.laplacian() + 2 * p.grad.dot(w.grad) / p.value);
    EXPECT_NEAR(x_terms(chart, spec, x), ref, 1e-12);
  }
}

TEST(RelaxedCertificate, LinearInBumpAmplitude) {
  const double width = 2.0;
  auto b = [&](double r) {
    const double t = r * r / (width * width);
    return t < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - t)) : 0.0;
  };
  const Grid g(65, 8.0);
  std::vector<double> lc, lp;
  double prev = 1e300;
  for (double c : {0.02, 0.01, 0.005}) {
    const auto cert = relaxed_scalar_certificate(MetricChart::perturbed(0.0, {compact(c, width)}), XSpec::none(), g);
    const double oracle = oracle::linear_negative_part_l1(b, c, width);
    EXPECT_NEAR(cert.psi_l1 / oracle, 1.0, 0.1);
    EXPECT_LT(cert.psi_l1, prev);
    EXPECT_LE(cert.psi_support_radius, width);
    EXPECT_TRUE(cert.holds_pointwise_outside);
    prev = cert.psi_l1;
    lc.push_back(std::log(c));
    lp.push_back(std::log(cert.psi_l1));
  }
  EXPECT_NEAR((lp[0] - lp[2]) / (lc[0] - lc[2]), 1.0, 0.02);
}

TEST(RelaxedCertificate, NonzeroFieldDecreasesWithAmplitude) {
  const Grid g(33, 8.0);
  const XSpec x = XSpec::gradient_of(compact(0.1, 2.0));
  const double big = relaxed_scalar_certificate(MetricChart::perturbed(0.0, {compact(0.04, 2.0)}), x, g).psi_l1;
  const double small = relaxed_scalar_certificate(MetricChart::perturbed(0.0, {compact(0.01, 2.0)}), x, g).psi_l1;
  EXPECT_GT(big, small);
  EXPECT_GT(small, 0.0);
}

TEST(Richardson, RecoversLimit) {
  // s(h) = 1 + 3 h^2 with h = 1, 1/2
  auto e = richardson({4.0, 1.75});
  EXPECT_NEAR(e.value, 1.0, 1e-14);
  EXPECT_NEAR(e.error, 0.75, 1e-14);
  // third order data: the observed order takes over
  e = richardson({1 + 8.0, 1 + 1.0, 1 + 0.125});
  EXPECT_NEAR(e.order, 3.0, 1e-12);
  EXPECT_NEAR(e.value, 1.0, 1e-12);
  EXPECT_THROW(richardson({1.0}), InvalidArgument);
}

TEST(Serialization, ReportsAndTable) {
  InequalityReport r;
  r.mass = 0.2;
  r.rhs_integral = 0.19;
  r.slack = 0.01;
  const json j = to_json(r);
  for (const char* k : {"mass", "rhs_integral", "hessian_l2", "grad_sup", "slack", "eps_grad", "excluded_fraction"})
    EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_TRUE(to_json(RelaxedScalarCertificate{}).contains("psi_l1"));

  auto t = inequality_table();
  append_row(t, MetricChart::schwarzschild(0.2), Grid(33, 20.0), r, 0.0);
  EXPECT_EQ(t.str().substr(0, t.str().find('\n')),
            "family,m,N,R_out,mass,rhs_integral,hessian_l2,grad_sup,slack,psi_l1");
  EXPECT_NE(t.str().find("SchwarzschildIsotropic,0.2,33,20,0.2,0.19"), std::string::npos);
}
