#include <gtest/gtest.h>

#include <cmath>

#include "afstab/geodesy.hpp"
#include "oracles.hpp"

using namespace afstab;

namespace {

Vec3 unit_g(const MetricChart& c, const Vec3& x, const Vec3& v) { return v / std::sqrt(v.dot(metric_at(c, x).g * v)); }

const HarmonicTriple& schwarzschild_triple() {
  static const HarmonicTriple t = [] {
    TripleOptions o;
    o.threads = 3;
    return build_harmonic_triple(MetricChart::schwarzschild(0.1), Grid(33, 20.0), o);
  }();
  return t;
}

}  // namespace

TEST(Shoot, FlatIsStraight) {
  const Vec3 x0(1, -2, 0.5), v0 = Vec3(1, 2, -2) / 3.0;
  const auto p = shoot_geodesic(MetricChart::flat(), x0, v0, 4.0);
  for (size_t k = 0; k < p.nodes.size(); ++k)
    EXPECT_LT((p.nodes[k] - (x0 + 4.0 * k / (p.nodes.size() - 1) * v0)).norm(), 1e-12);
}

TEST(Shoot, RadialSchwarzschildMatchesArclength) {
  const double m = 0.2, L = 5.0;
  const auto chart = MetricChart::schwarzschild(m);
  const Vec3 x0(2, 0, 0);
  const auto p = shoot_geodesic(chart, x0, unit_g(chart, x0, Vec3::UnitX()), L);
  EXPECT_NEAR(p.nodes.back().x(), oracle::radius_after(2.0, L, m), 1e-10);
  EXPECT_LT(p.nodes.back().tail<2>().norm(), 1e-14);
}

TEST(Shoot, SpeedConservedAndUnitSpacing) {
  const auto chart = MetricChart::conformally_flat(0.2, 0.1, 1.5, Vec3(0.5, 0.5, 0));
  RandomStream rng(7, 0);
  for (int trial = 0; trial < 5; ++trial) {
    const Vec3 x0 = rng.in_ball(Vec3::Zero(), 3.0);
    const Vec3 v0 = unit_g(chart, x0, rng.unit_vector());
    const auto p = shoot_geodesic(chart, x0, v0, 6.0);
    EXPECT_LT(p.speed_drift, 1e-8);
    GeodesicOptions tight;
    tight.ode.rtol = 1e-14;
    tight.ode.atol = 1e-15;
    EXPECT_LT((shoot_geodesic(chart, x0, v0, 6.0, tight).nodes.back() - p.nodes.back()).norm(), 1e-8);
    const double mean = p.length / (p.nodes.size() - 1);
    for (size_t k = 1; k < p.nodes.size(); ++k)
      ASSERT_NEAR(segment_length(chart, p.nodes[k - 1], p.nodes[k]), mean, 0.01 * mean);
  }
}

TEST(Shoot, Errors) {
  const auto chart = MetricChart::schwarzschild(0.2);
  EXPECT_THROW(shoot_geodesic(chart, Vec3(2, 0, 0), Vec3::UnitX(), 1.0), InvalidArgument);
  GeodesicOptions boxed;
  boxed.box = 5.0;
  const Vec3 x0(2, 0, 0);
  EXPECT_THROW(shoot_geodesic(chart, x0, unit_g(chart, x0, Vec3::UnitX()), 10.0, boxed), LeftDomain);
}

TEST(Distance, FlatAndRadialClosedForms) {
  EXPECT_NEAR(distance(MetricChart::flat(), Vec3(0, 0, 0), Vec3(3, 4, 0)).d, 5.0, 1e-12);
  const auto chart = MetricChart::schwarzschild(0.2);
  const auto r = distance(chart, Vec3(2, 0, 0), Vec3(5, 0, 0));
  EXPECT_NEAR(r.d, oracle::radial_arclength(5, 0.2) - oracle::radial_arclength(2, 0.2), 1e-9);
  EXPECT_LT(r.path.endpoint_residual, 1e-6 * r.d);
  EXPECT_EQ(distance(chart, Vec3(1, 1, 1), Vec3(1, 1, 1)).d, 0.0);
}

TEST(Distance, BoundedByGraphAndEuclidean) {
  const auto chart = MetricChart::schwarzschild(0.2);
  DistanceOptions o;
  o.graph_seed = GraphSeedPolicy::Always;
  RandomStream rng(11, 0);
  for (int k = 0; k < 6; ++k) {
    const Vec3 x = rng.in_ball(Vec3::Zero(), 4.0), y = rng.in_ball(Vec3::Zero(), 4.0);
    const auto r = distance(chart, x, y, o);
    EXPECT_LE(r.d, r.graph_upper_bound);
    EXPECT_GE(r.d, (x - y).norm());  // phi >= 1 for this family
    EXPECT_GE(r.converged_candidates, 1);
  }
}

TEST(Distance, LensedTargetConverges) {
  // chord passes through the core close to a caustic of the lens
  const auto chart = MetricChart::schwarzschild(0.1);
  const Vec3 x(3.7979375382959626, 0.07496254366218075, 0.4034242908223836);
  const Vec3 y(-8.300612656441972, 0.07444872622407708, 0.400656028325458);
  const auto r = distance(chart, x, y);
  EXPECT_LT(r.path.endpoint_residual, 1e-6 * r.d);
  EXPECT_LE(r.d, graph_distance(chart, x, y).distance);
}

TEST(Distance, SymmetryAndTriangle) {
  const auto chart = MetricChart::conformally_flat(0.15, -0.05, 1.0, Vec3(1, 0, 0));
  RandomStream rng(3, 1);
  for (int k = 0; k < 8; ++k) {
    const Vec3 x = rng.in_ball(Vec3::Zero(), 3.0), y = rng.in_ball(Vec3::Zero(), 3.0),
               z = rng.in_ball(Vec3::Zero(), 3.0);
    const double dxy = distance(chart, x, y).d, dyx = distance(chart, y, x).d;
    EXPECT_NEAR(dxy, dyx, 1e-8);
    EXPECT_LE(distance(chart, x, z).d, dxy + distance(chart, y, z).d + 1e-6);
  }
}

TEST(SegmentFunctional, Basics) {
  const auto chart = MetricChart::flat();
  const Grid g(17, 5.0);
  const auto r = distance(chart, Vec3(-1, 0, 0), Vec3(2, 1, 0));
  EXPECT_EQ(segment_functional(r, ScalarGridField(g, 0.0)), 0.0);
  EXPECT_NEAR(segment_functional(r, ScalarGridField(g, 2.5)), 2.5 * r.d, 1e-12);
  EXPECT_THROW(segment_functional(r, ScalarGridField(g, -1.0)), InvalidArgument);

  const auto t = build_harmonic_triple(chart, Grid(17, 5.0));
  EXPECT_LT(segment_functional(r, hessian_norm_field(t)), 1e-9);
}

TEST(SegmentFunctional, FallsWithMass) {
  double prev = 1e300;
  for (double m : {0.2, 0.1, 0.05}) {
    const auto chart = MetricChart::schwarzschild(m);
    const auto t = build_harmonic_triple(chart, Grid(33, 20.0));
    const double F = segment_functional(distance(chart, Vec3(2, 1, 0), Vec3(-1, 3, 1)), hessian_norm_field(t));
    EXPECT_LT(F, prev);
    prev = F;
  }
}

TEST(MeanValuePick, ConstantScoreKeepsFirstSample) {
  const auto chart = MetricChart::schwarzschild(0.1);
  const auto pick = mean_value_pick(chart, Vec3(2, 0, 0), 0.5, [](const Vec3&) { return 3.0; }, RandomStream(1, 2));
  EXPECT_EQ(pick.point, Vec3(2, 0, 0));
  EXPECT_EQ(pick.score, 3.0);
  PickOptions no_center;
  no_center.center_first = false;
  RandomStream a(1, 2), b(1, 2);
  const auto p1 = mean_value_pick(chart, Vec3(2, 0, 0), 0.5, [](const Vec3&) { return 3.0; }, a, no_center);
  const auto p2 = mean_value_pick(chart, Vec3(2, 0, 0), 0.5, [](const Vec3&) { return 3.0; }, b, no_center);
  EXPECT_EQ(p1.point, p2.point);
  EXPECT_NE(p1.point, Vec3(2, 0, 0));
}

TEST(MeanValuePick, MarkovBoundAndEmptySample) {
  const auto& t = schwarzschild_triple();
  const ScalarGridField f = hessian_norm_field(t);
  const Vec3 q(-6, 2, 0);
  auto score = [&](const Vec3& p) { return segment_functional(distance(t.chart, p, q), f); };
  const auto pick = mean_value_pick(t.chart, Vec3(2, 0, 0), 1.0, score, RandomStream(5, 0));
  EXPECT_LE(pick.score, 2.0 * pick.average);
  EXPECT_GE(pick.accepted, 1);

  // a tall conformal factor makes every Euclidean sample too far in g
  const auto tall = MetricChart::conformally_flat(0.0, 2.0, 10.0);
  PickOptions no_center;
  no_center.center_first = false;
  EXPECT_THROW(mean_value_pick(tall, Vec3::Zero(), 0.5, [](const Vec3&) { return 0.0; }, RandomStream(1, 1),
                               no_center),
               EmptySample);
}

TEST(Projection, FlatIsOrthogonalProjection) {
  const auto chart = MetricChart::flat();
  const auto t = build_harmonic_triple(chart, Grid(33, 10.0));
  const auto pr = level_set_projection(chart, t, Vec3(1, 1, 0), Vec3(0, 0, 0), 0, {}, RandomStream(1, 0));
  EXPECT_EQ(pr.x_star, Vec3(1, 1, 0));
  EXPECT_LT((pr.z - Vec3(0, 1, 0)).norm(), 1e-9);
}

TEST(Projection, LevelReachedAndBounded) {
  const auto& t = schwarzschild_triple();
  RandomStream rng(21, 0);
  for (int k = 0; k < 3; ++k) {
    const Vec3 x = rng.in_ball(t.base_point, 3.0), y = rng.in_ball(t.base_point, 3.0);
    const auto pr = level_set_projection(t.chart, t, x, y, k, {}, rng.split(k));
    EXPECT_LT(std::abs(t.value(k, pr.z) - t.value(k, y)), 1e-6);
    EXPECT_LT((pr.z - t.base_point).norm(), 10.0);
  }
  ProjectionParams shortL;
  shortL.far_fraction = 0.005;
  EXPECT_THROW(level_set_projection(t.chart, t, Vec3(3, 0, 0), Vec3(-3, 0, 0), 0, shortL, RandomStream(1, 0)),
               NoCrossing);
  EXPECT_THROW(level_set_projection(MetricChart::flat(), t, Vec3(3, 0, 0), Vec3(-3, 0, 0), 0, {}, RandomStream(1, 0)),
               MismatchedChart);
}

TEST(Pythagorean, FlatIsExact) {
  const auto chart = MetricChart::flat();
  const auto t = build_harmonic_triple(chart, Grid(33, 10.0));
  RandomStream rng(4, 0);
  for (int k = 0; k < 4; ++k) {
    const Vec3 x = rng.in_ball(t.base_point, 3.0), y = rng.in_ball(t.base_point, 3.0);
    const auto rec = pythagorean_check(chart, t, x, y, k % 3, {}, rng.split(k));
    EXPECT_LT(rec.defect, 1e-6);
    EXPECT_LT(rec.u_defect_same, 1e-6);
    EXPECT_LT(rec.u_defect_cross, 1e-6);
  }
  const auto same = pythagorean_check(chart, t, Vec3(1, 2, 0), Vec3(1, 2, 0), 0, {}, rng);
  EXPECT_EQ(same.defect, 0.0);
  EXPECT_EQ(same.d_xy, 0.0);
}

TEST(Pythagorean, CurvedRecordsAreConsistent) {
  const auto& t = schwarzschild_triple();
  double gsup = 0.0;
  for (int a = 0; a < 3; ++a)
    t.grid.for_each_node([&](int i, int j, int k, size_t idx) {
      if (!t.flagged(i, j, k)) gsup = std::max(gsup, t.grad_norm(a, idx));
    });
  RandomStream rng(8, 0);
  for (int k = 0; k < 3; ++k) {
    const Vec3 x = rng.in_ball(t.base_point, 3.0), y = rng.in_ball(t.base_point, 3.0);
    const auto rec = pythagorean_check(t.chart, t, x, y, k, {}, rng.split(k));
    EXPECT_GE(rec.defect, 0.0);
    EXPECT_LT(rec.level_residual, 1e-6);
    // distance dominates coordinate differences
    const Vec3 du = t.map(rec.x) - t.map(rec.y);
    for (int a = 0; a < 3; ++a) EXPECT_LE(std::abs(du[a]), gsup * rec.d_xy * 1.01);
  }
}

TEST(BishopGromov, ModelVolume) {
  EXPECT_NEAR(model_ball_volume(2.0, 0.0), 4 * M_PI * 8 / 3, 1e-12);
  EXPECT_NEAR(model_ball_volume(1.5, 1e-8 * 0.999), model_ball_volume(1.5, 1e-8 * 1.001), 1e-9);
  // direct shell integral 4 pi int sinh^2(a s)/a^2 ds
  const double k = 0.3, a = std::sqrt(k);
  const double ref = 4 * M_PI * oracle::simpson([&](double s) { return std::pow(std::sinh(a * s) / a, 2); }, 0, 2.0);
  EXPECT_NEAR(model_ball_volume(2.0, k), ref, 1e-9);
}

TEST(BishopGromov, FlatRatios) {
  const std::vector<double> radii{0.5, 1.0, 1.5, 2.0, 2.5, 3.0};
  const auto near_zero = bishop_gromov_check(MetricChart::flat(), Vec3(2, 0, 0), radii, 0.0);
  // occupancy error is O(h/r), about 2% at five cells
  for (double r : near_zero.ratios) EXPECT_NEAR(r, 1.0, 0.03);
  EXPECT_TRUE(near_zero.nonincreasing);
  const auto curved = bishop_gromov_check(MetricChart::flat(), Vec3(2, 0, 0), radii, 0.1);
  for (size_t i = 1; i < curved.ratios.size(); ++i) EXPECT_LT(curved.ratios[i], curved.ratios[i - 1]);
}

TEST(BishopGromov, SchwarzschildWithCertifiedKappa) {
  const auto chart = MetricChart::schwarzschild(0.2);
  const auto cert = certify_hypotheses(chart, default_certification_sampling(chart, 48));
  const auto rep = bishop_gromov_check(chart, Vec3(2, 0, 0), {0.5, 1.0, 1.5, 2.0, 2.5, 3.0}, cert.ricci_kappa);
  EXPECT_TRUE(rep.nonincreasing) << rep.worst_increase;
  EXPECT_THROW(bishop_gromov_check(chart, Vec3(998, 0, 0), {1.0, 3.0}, 0.1), OutOfDomain);
  EXPECT_THROW(bishop_gromov_check(chart, Vec3(0, 0, 0), {1.0}, -0.1), InvalidArgument);
}

TEST(Serialization, PathAndRecords) {
  const auto r = distance(MetricChart::flat(), Vec3(0, 0, 0), Vec3(1, 0, 0));
  const json j = to_json(r.path);
  EXPECT_EQ(j["method"], "Shooting");
  EXPECT_EQ(j["points"].size(), r.path.nodes.size());
  auto t = pythagorean_table();
  PythagoreanRecord rec;
  rec.y = Vec3(1, 2, 3);
  append_row(t, MetricChart::schwarzschild(0.05), rec);
  const std::string s = t.str();
  EXPECT_EQ(s.substr(0, s.find('\n')), "family,m,i,x,y,z,defect,u_defect_same,u_defect_cross,d_xy,d_xz,d_yz");
  EXPECT_NE(s.find("SchwarzschildIsotropic,0.05,1,0;0;0,1;2;3,"), std::string::npos);
}
