// Desk-scale acceptance run: one PASS/FAIL line per criterion.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <random>

#include "afstab/harness.hpp"
#include "oracles.hpp"

using namespace afstab;
namespace fs = std::filesystem;

namespace {

constexpr int kN = 65;
constexpr double kROut = 20.0;

int failures = 0;

void report(int id, bool ok, const std::string& what, const std::string& detail) {
  if (!ok) ++failures;
  std::printf("%s criterion %d: %s (%s)\n", ok ? "PASS" : "FAIL", id, what.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string g(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.3g", v);
  return b;
}

fs::path config_path(const std::string& name) { return fs::path(AFSTAB_SOURCE_DIR) / "configs" / name; }

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("afstab_acceptance_" + name);
  fs::remove_all(p);
  return p;
}

json load(const fs::path& p) { return json::parse(read_text(p.string())); }

std::vector<json> sweep_points(const fs::path& dir) {
  std::vector<json> out;
  for (int i = 0; fs::exists(dir / "sweep" / ("point_" + std::to_string(i) + ".json")); ++i)
    out.push_back(load(dir / "sweep" / ("point_" + std::to_string(i) + ".json")));
  return out;
}

bool strictly_decreasing(const std::vector<double>& v) {
  for (size_t i = 1; i < v.size(); ++i)
    if (!(v[i] < v[i - 1])) return false;
  return !v.empty();
}

std::vector<double> column(const std::vector<json>& pts, const std::function<double(const json&)>& f) {
  std::vector<double> v;
  for (const auto& p : pts) v.push_back(f(p));
  return v;
}

std::string list(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : " > ") + g(x);
  return s;
}

HarmonicTriple axis_x(const MetricChart& chart, int n) {
  TripleOptions o;
  o.axes = {true, false, false};
  return build_harmonic_triple(chart, Grid(n, kROut), o);
}

Bump compact(double amp, double width) {
  Bump b;
  b.shape = BumpShape::Compact;
  b.amplitude = amp;
  b.width = width;
  return b;
}

// ---------------------------------------------------------------------------

void flat_exactness(const json& flat_point) {
  const auto chart = MetricChart::flat(kROut);
  const auto t = build_harmonic_triple(chart, Grid(kN, kROut));
  double u_err = 0.0;
  t.grid.for_each_node([&](int i, int j, int k, size_t idx) {
    const Vec3 x = t.grid.node(i, j, k) - t.base_point;
    for (int a = 0; a < 3; ++a) u_err = std::max(u_err, std::abs(t.u[a].values[idx] - x[a]));
  });
  const double mass = std::abs(adm_mass_at_radius(chart, 10.0));
  const double defects = std::max({flat_point["distortion"]["max_defect"].get<double>(),
                                   flat_point["pythagorean"]["max"].get<double>(),
                                   flat_point["flow_err_max"].get<double>()});
  report(1, mass < 1e-10 && u_err < 1e-8 && defects < 1e-6, "flat exactness",
         "mass " + g(mass) + ", max |u - x| " + g(u_err) + ", max defect " + g(defects));
}

void schwarzschild_mass() {
  double worst = 0.0;
  for (double m : {0.05, 0.1, 0.2}) {
    const auto chart = MetricChart::schwarzschild(m);
    const auto rep = adm_mass(chart, default_mass_radii(chart), ExtrapolationModel::for_decay(chart.decay));
    worst = std::max(worst, std::abs(rep.extrapolated - m) / m);
  }
  report(2, worst < 5e-3, "Schwarzschild mass recovery", "worst relative error " + g(worst));
}

void curvature() {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const auto sch = MetricChart::schwarzschild(0.1);
  double r_worst = 0.0;
  int n = 0;
  while (n < 1000) {
    const Vec3 x = 15.0 * Vec3(U(rng), U(rng), U(rng));
    if (x.norm() < 1.5 || x.norm() > 15.0) continue;
    r_worst = std::max(r_worst, std::abs(curvature_at(sch, x).scalar));
    ++n;
  }
  // phi = 1 + a exp(-|x - c|^2 / w^2), Laplacian in closed form
  const double a = 0.2, w = 1.3;
  const Vec3 c(0.4, -0.2, 0.1);
  const auto gauss = MetricChart::conformally_flat(0.0, a, w, c);
  double id_worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const Vec3 x = c + 4.0 * Vec3(U(rng), U(rng), U(rng));
    const double s2 = (x - c).squaredNorm(), e = std::exp(-s2 / (w * w));
    const double phi = 1 + a * e;
    const double lap = a * e * (4 * s2 / std::pow(w, 4) - 6 / (w * w));
    id_worst = std::max(id_worst, std::abs(curvature_at(gauss, x).scalar + 8 * std::pow(phi, -5) * lap));
  }
  report(3, r_worst < 1e-8 && id_worst < 1e-9, "curvature",
         "max |R| Schwarzschild exterior " + g(r_worst) + ", conformal identity " + g(id_worst));
}

// errors against the radial ODE along the positive x ray, r in (0, 10]
double ode_error(const HarmonicTriple& t, const oracle::RadialHarmonicOracle& h) {
  const Grid& gr = t.grid;
  const int c = gr.n() / 2;
  std::vector<double> r;
  for (int i = c + 1; gr.coord(i) <= 10.0 + 1e-9; ++i) r.push_back(gr.coord(i));
  const auto ref = h(r);
  // the triple is normalized at the base point; compare differences
  const double shift = t.value(0, t.base_point) - h({t.base_point.x()})[0];
  double err = 0, hmax = 0;
  for (size_t q = 0; q < r.size(); ++q) {
    err = std::max(err, std::abs(t.u[0].at(c + 1 + int(q), c, c) - shift - ref[q]));
    hmax = std::max(hmax, std::abs(ref[q]));
  }
  return err / hmax;
}

void harmonic_and_richardson() {
  const double m = 0.1;
  const auto chart = MetricChart::schwarzschild(m);
  const oracle::RadialHarmonicOracle h(chart);
  const double mass = adm_mass(chart, default_mass_radii(chart), ExtrapolationModel::for_decay(chart.decay)).extrapolated;
  std::vector<double> err, slack;
  for (int n : {33, 65, 129}) {
    const auto t = axis_x(chart, n);
    err.push_back(ode_error(t, h));
    slack.push_back(mass_inequality_rhs(t, chart, 0, default_eps_grad(t, 0), mass).slack);
  }
  const double order = std::log2(err[1] / err[2]);
  report(4, err[2] < 1e-3 && order >= 1.8, "harmonic coordinate vs radial ODE",
         "relative error " + list(err) + ", observed order " + g(order));
  const auto e = richardson(slack);
  report(5, e.value + e.error >= 0.0, "Richardson-extrapolated slack",
         "slack " + g(e.value) + " +- " + g(e.error) + " from " + list(slack));
}

void hessian_bound(const std::vector<json>& pts) {
  bool ok = true;
  std::vector<double> hl2;
  for (const auto& p : pts) {
    const double m = p["m"].get<double>();
    const auto chart = MetricChart::schwarzschild(m, kROut);
    const auto t = build_harmonic_triple(chart, Grid(kN, kROut));
    double worst = 0.0;
    for (int a = 0; a < 3; ++a) {
      const auto r = mass_inequality_rhs(t, chart, a, default_eps_grad(t, a), p["mass"].get<double>());
      ok = ok && r.hessian_l2 <= 16 * M_PI * r.grad_sup * r.mass * 1.1;
      worst = std::max(worst, r.hessian_l2);
    }
    hl2.push_back(worst);
  }
  ok = ok && strictly_decreasing(hl2);
  report(6, ok, "Hessian L2 bound and monotonicity", "hessian_l2 " + list(hl2));
}

void bishop_gromov() {
  const auto radii = SamplingConfig{}.bg_radii;
  const Vec3 q(2, 0, 0);
  const auto flat = bishop_gromov_check(MetricChart::flat(kROut), q, radii, 0.1);
  const auto sch = MetricChart::schwarzschild(0.1, kROut);
  const double kappa = certify_hypotheses(sch, default_certification_sampling(sch, 48)).ricci_kappa;
  const auto curved = bishop_gromov_check(sch, q, radii, kappa);
  report(7, flat.nonincreasing && curved.nonincreasing, "Bishop-Gromov monotonicity",
         "worst rise flat " + g(flat.worst_increase) + ", Schwarzschild " + g(curved.worst_increase) + " at kappa " +
             g(kappa));
}

void pythagorean(const std::vector<json>& pts, const json& flat_point) {
  const auto p50 = column(pts, [](const json& p) { return p["pythagorean"]["p50"].get<double>(); });
  int fails = 0;
  for (const auto& p : pts) fails += p["pythagorean"]["failures"].get<int>();
  const double flat = flat_point["pythagorean"]["max"].get<double>();
  report(8, strictly_decreasing(p50) && flat < 1e-6 && fails == 0, "Pythagorean defect",
         "median " + list(p50) + ", flat max " + g(flat) + ", failures " + std::to_string(fails));
}

void distortion(const std::vector<json>& pts) {
  const auto p50 = column(pts, [](const json& p) { return p["distortion"]["quantiles"]["p50"].get<double>(); });
  const auto p90 = column(pts, [](const json& p) { return p["distortion"]["quantiles"]["p90"].get<double>(); });
  const double m = 0.1;
  const auto chart = MetricChart::schwarzschild(m, kROut);
  const auto t = build_harmonic_triple(chart, Grid(kN, kROut));
  const double r1 = 1.5, r2 = 4.5;
  const auto h = oracle::RadialHarmonicOracle(chart)({r1, r2});
  const double expected =
      std::abs(oracle::radial_arclength(r2, m) - oracle::radial_arclength(r1, m) - std::abs(h[1] - h[0]));
  const Vec3 x(r1, 0, 0), y(r2, 0, 0);
  const double numeric = std::abs(distance(chart, x, y).d - (t.map(x) - t.map(y)).norm());
  const double gap = std::abs(numeric - expected);
  report(9, strictly_decreasing(p50) && strictly_decreasing(p90) && gap < 1e-3, "GH distortion",
         "median " + list(p50) + ", p90 " + list(p90) + ", radial pair off by " + g(gap));
}

void flows(const std::vector<json>& pts, const json& flat_point) {
  const auto err = column(pts, [](const json& p) { return p["flow_err_max"].get<double>(); });
  bool disp = true;
  int fails = 0;
  for (const auto& p : pts) {
    disp = disp && p["displacement_ok"].get<bool>();
    fails += p["flow_failures"].get<int>();
  }
  const double flat = flat_point["flow_err_max"].get<double>();
  report(10, strictly_decreasing(err) && flat < 1e-6 && disp && fails == 0, "gradient flows",
         "max u error " + list(err) + ", flat " + g(flat) + ", displacement bound " + (disp ? "holds" : "violated"));
}

void relaxed_certificate() {
  const Grid gr(kN, 8.0);
  const double zero = relaxed_scalar_certificate(MetricChart::flat(), XSpec::none(), gr).psi_l1 +
                      relaxed_scalar_certificate(MetricChart::schwarzschild(0.1), XSpec::none(), gr).psi_l1;
  const double width = 2.0;
  auto b = [&](double r) {
    const double s = r * r / (width * width);
    return s < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - s)) : 0.0;
  };
  double worst = 0.0;
  for (double c : {0.02, 0.01, 0.005}) {
    const double psi = relaxed_scalar_certificate(MetricChart::perturbed(0.0, {compact(-c, width)}), XSpec::none(), gr).psi_l1;
    const double lin = relaxed_scalar_certificate(MetricChart::perturbed(0.0, {compact(c, width)}), XSpec::none(), gr).psi_l1;
    worst = std::max({worst, std::abs(psi / oracle::linear_negative_part_l1(b, c, width) - 1.0),
                      std::abs(lin / oracle::linear_negative_part_l1(b, c, width) - 1.0)});
  }
  report(11, zero == 0.0 && worst < 0.1, "relaxed scalar certificate",
         "psi for R >= 0: " + g(zero) + ", worst deviation from linear " + g(worst));
}

void determinism(const fs::path& a, const fs::path& b) {
  int files = 0, differ = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file() || e.path().filename() == "manifest.json") continue;
    ++files;
    const fs::path other = b / fs::relative(e.path(), a);
    if (!fs::exists(other) || read_text(e.path().string()) != read_text(other.string())) ++differ;
  }
  const bool ok = files > 0 && differ == 0 && verify_manifest(a).empty() && verify_manifest(b).empty();
  report(12, ok, "determinism", std::to_string(files) + " artifacts compared, " + std::to_string(differ) +
                                    " differ (one thread against two)");
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const auto sweep_cfg = parse_config(config_path("schwarzschild_sweep.json").string());
    const auto dir_a = scratch("sweep_a"), dir_b = scratch("sweep_b"), dir_flat = scratch("flat");
    const bool ran = run("sweep", sweep_cfg, {dir_a.string(), 1}).exit_code == 0 &&
                     run("sweep", sweep_cfg, {dir_b.string(), 2}).exit_code == 0 &&
                     run("sweep", parse_config(config_path("flat.json").string()), {dir_flat.string(), 1}).exit_code == 0;
    if (!ran) std::printf("note: a sweep run reported a failing stage\n");
    const auto pts = sweep_points(dir_a);
    const json flat_point = sweep_points(dir_flat).at(0);

    flat_exactness(flat_point);
    schwarzschild_mass();
    curvature();
    harmonic_and_richardson();
    hessian_bound(pts);
    bishop_gromov();
    pythagorean(pts, flat_point);
    distortion(pts);
    flows(pts, flat_point);
    relaxed_certificate();
    determinism(dir_a, dir_b);
  } catch (const std::exception& e) {
    std::printf("FAIL acceptance aborted: %s\n", e.what());
    return 1;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%d failing criteria, %.0f s\n", failures, secs);
  return failures == 0 ? 0 : 1;
}
