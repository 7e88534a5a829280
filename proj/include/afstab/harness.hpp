#pragma once

// Subcommand pipelines, artifact writing and the run manifest.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "afstab/config.hpp"

namespace afstab {

inline constexpr const char* kToolVersion = "1.0.0";

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> s{"check-af", "mass",      "harmonic", "inequality",
                                          "pythagoras", "distort", "flow",     "sweep"};
  return s;
}

struct StageStatus {
  std::string name;
  bool ok = true;
  std::string message;
};

struct RunManifest {
  std::string subcommand;
  std::string config_hash;
  std::string tool_version = kToolVersion;
  std::string started, finished;  // UTC, ISO 8601
  std::vector<StageStatus> stages;
  std::vector<std::pair<std::string, std::string>> artifacts;  // relative path, FNV-1a hash
};

struct RunResult {
  int exit_code = 0;
  RunManifest manifest;
  std::string failing_stage;
};

struct RunOptions {
  std::string out_dir;  // empty: config output.directory
  int threads = 1;
};

inline json to_json(const RunManifest& m) {
  json stages = json::array();
  for (const auto& s : m.stages) stages.push_back({{"stage", s.name}, {"status", s.ok ? "ok" : "failed"}, {"message", s.message}});
  json arts = json::array();
  for (const auto& [p, h] : m.artifacts) arts.push_back({{"path", p}, {"fnv1a64", h}});
  return {{"tool", "afstab"},       {"tool_version", m.tool_version}, {"subcommand", m.subcommand},
          {"config_hash", m.config_hash}, {"started", m.started},   {"finished", m.finished},
          {"stages", stages},       {"artifacts", arts}};
}

namespace detail {

inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Single writer for one run directory.
class ArtifactWriter {
 public:
  ArtifactWriter(std::filesystem::path dir, const OutputConfig& out) : dir_(std::move(dir)), out_(out) {}

  void json_file(const std::string& rel, const json& j) {
    if (out_.wants("json")) write(rel, j.dump(2) + "\n");
  }
  void csv_file(const std::string& rel, const CsvTable& t) {
    if (out_.wants("csv")) write(rel, t.str());
  }
  void bin_file(const std::string& rel, const std::string& bytes) {
    if (out_.wants("bin")) write(rel, bytes);
  }
  void text_file(const std::string& rel, const std::string& s) { write(rel, s); }

  const std::filesystem::path& dir() const { return dir_; }

 private:
  void write(const std::string& rel, const std::string& content) {
    const auto p = dir_ / rel;
    std::filesystem::create_directories(p.parent_path());
    write_text(p.string(), content);
  }
  std::filesystem::path dir_;
  OutputConfig out_;
};

// Removes what a previous manifest in `dir` listed, so stale files do not linger.
inline void clear_previous_run(const std::filesystem::path& dir) {
  const auto mpath = dir / "manifest.json";
  if (!std::filesystem::exists(mpath)) return;
  try {
    const json m = json::parse(read_text(mpath.string()));
    for (const auto& a : m.at("artifacts")) {
      const auto p = dir / a.at("path").get<std::string>();
      if (std::filesystem::is_regular_file(p)) std::filesystem::remove(p);
    }
  } catch (const std::exception&) {
    // an unreadable manifest leaves the directory as it is
  }
  std::filesystem::remove(mpath);
}

inline std::vector<std::pair<std::string, std::string>> hash_tree(const std::filesystem::path& dir) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = std::filesystem::relative(e.path(), dir).generic_string();
    if (rel == "manifest.json") continue;
    out.emplace_back(rel, hex64(fnv1a64(read_text(e.path().string()))));
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct Context {
  const ExperimentConfig& cfg;
  const RunOptions& opt;
  ArtifactWriter& w;
  std::vector<StageStatus>& stages;
  std::vector<std::string>& summary;

  MetricChart chart() const { return make_chart(cfg.family); }
  RandomStream rng() const { return RandomStream(cfg.sampling.seed, 0).split(0); }

  void assert_stage(const std::string& name, bool ok, const std::string& msg) {
    stages.push_back({name, ok, ok ? "" : msg});
  }

  HarmonicTriple triple(const MetricChart& c) const {
    return build_harmonic_triple(c, Grid(cfg.grid.n, cfg.grid.r_out), triple_options(cfg, opt.threads));
  }

  double mass(const MetricChart& c) const {
    if (c.monopole() == 0.0 && c.bumps.empty()) return 0.0;
    const auto radii = cfg.solver.mass_radii.empty() ? default_mass_radii(c) : cfg.solver.mass_radii;
    return adm_mass(c, radii, ExtrapolationModel::for_decay(c.decay),
                    SphereQuadrature(cfg.solver.quadrature_order, 2 * cfg.solver.quadrature_order))
        .extrapolated;
  }
};

inline std::string g(double v) { return fmt_double(v); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Pipelines

namespace pipeline {

inline void check_af(detail::Context& cx) {
  const MetricChart chart = cx.chart();
  const auto spec = default_certification_sampling(chart, cx.cfg.sampling.certification_per_sphere);
  const auto cert = certify_hypotheses(chart, spec);
  SampleSpec far = spec;
  far.radii.erase(std::remove_if(far.radii.begin(), far.radii.end(), [](double r) { return r < 2.0; }),
                  far.radii.end());
  const auto af = verify_asymptotic_flatness(chart, far);
  const double kappa = cx.cfg.sampling.bg_kappa.value_or(cert.ricci_kappa);
  const auto bg = bishop_gromov_check(chart, cx.cfg.grid.base_point, cx.cfg.sampling.bg_radii, kappa);
  json j = {{"scalar_min", json_number(cert.scalar_min)},
            {"ricci_kappa", json_number(cert.ricci_kappa)},
            {"af_ok", cert.af_ok},
            {"fitted_tau", json_number(af.fitted_tau)},
            {"worst_ratio", json_number(af.worst_ratio)},
            {"witness_points", {json_vec(cert.witness_points[0]), json_vec(cert.witness_points[1])}},
            {"bishop_gromov", to_json(bg)}};
  cx.w.json_file("certificate.json", j);
  CsvTable t({"r", "volume", "model_volume", "ratio"});
  for (size_t i = 0; i < bg.radii.size(); ++i)
    t.row({detail::g(bg.radii[i]), detail::g(bg.volumes[i]), detail::g(bg.model_volumes[i]), detail::g(bg.ratios[i])});
  cx.w.csv_file("bishop_gromov.csv", t);
  cx.summary.push_back("scalar_min " + detail::g(cert.scalar_min) + ", ricci kappa " + detail::g(cert.ricci_kappa) +
                       ", af " + (cert.af_ok ? "ok" : "violated"));
  cx.summary.push_back("Bishop-Gromov worst rise " + detail::g(bg.worst_increase) + " at kappa " + detail::g(kappa));
  cx.assert_stage("af-decay", cert.af_ok, "declared (b, tau) decay bound violated");
  cx.assert_stage("bishop-gromov", bg.nonincreasing, "volume ratio rises by " + detail::g(bg.worst_increase));
}

inline void mass(detail::Context& cx) {
  const MetricChart chart = cx.chart();
  const auto radii = cx.cfg.solver.mass_radii.empty() ? default_mass_radii(chart) : cx.cfg.solver.mass_radii;
  const int q = cx.cfg.solver.quadrature_order;
  const auto rep = adm_mass(chart, radii, ExtrapolationModel::for_decay(chart.decay), SphereQuadrature(q, 2 * q));
  cx.w.json_file("mass.json", to_json(rep));
  cx.w.csv_file("mass.csv", to_csv(rep));
  cx.summary.push_back("ADM mass " + detail::g(rep.extrapolated) + " (fit exponent " + detail::g(rep.fit_exponent) + ")");
  cx.assert_stage("mass", true, "");
}

inline void harmonic(detail::Context& cx) {
  const MetricChart chart = cx.chart();
  const HarmonicTriple t = cx.triple(chart);
  json axes = json::array();
  for (int a = 0; a < 3; ++a) {
    const std::string name = "u" + std::to_string(a + 1);
    cx.w.bin_file(name + ".bin", encode_field(t.u[a]));
    cx.w.json_file(name + ".json", field_sidecar(t.u[a], chart, a, cx.cfg.grid.bc));
    cx.w.csv_file("probe_" + name + ".csv", line_probe(t.u[a], a, name));
    axes.push_back({{"axis", a + 1},
                    {"iterations", t.iterations[a]},
                    {"relative_residual", t.residual_norm[a]},
                    {"grad_sup", grad_sup(t, a)},
                    {"cheng_yau_ratio", json_number(cheng_yau_ratio(t, a, t.base_point, 1.0))},
                    {"divergence_l1", divergence_l1(t, a, cx.cfg.sampling.r)}});
  }
  cx.w.json_file("harmonic.json", {{"N", t.grid.n()},
                                   {"R_out", t.grid.r_out()},
                                   {"boundary_policy", to_string(cx.cfg.grid.bc)},
                                   {"base_point", json_vec(t.base_point)},
                                   {"ortho_l1", ortho_l1(t, cx.cfg.sampling.r)},
                                   {"axes", axes}});
  double worst = 0.0;
  for (int a = 0; a < 3; ++a) worst = std::max(worst, t.residual_norm[a]);
  cx.summary.push_back("harmonic triple on N=" + std::to_string(t.grid.n()) + ", worst residual " + detail::g(worst));
  cx.assert_stage("harmonic", worst <= cx.cfg.solver.tol, "residual above tolerance");
}

inline void inequality(detail::Context& cx) {
  const MetricChart chart = cx.chart();
  const double m = cx.mass(chart);
  const HarmonicTriple t = cx.triple(chart);
  CsvTable table = inequality_table();
  const XSpec xs = cx.cfg.solver.x_field.enabled
                       ? XSpec::gradient_of(make_bump(cx.cfg.solver.x_field.w), cx.cfg.solver.x_field.coefficient)
                       : XSpec::none();
  const auto cert = relaxed_scalar_certificate(chart, xs, t.grid);
  json axes = json::array();
  bool hess_ok = true, slack_ok = true;
  for (int a = 0; a < 3; ++a) {
    const double eps = default_eps_grad(t, a, cx.cfg.solver.eps_grad);
    const auto rep = mass_inequality_rhs(t, chart, a, eps, m);
    const auto kato = refined_kato_check(t, chart, a, eps);
    append_row(table, chart, t.grid, rep, cert.psi_l1);
    const double bound = 16 * M_PI * rep.grad_sup * m * 1.1;
    hess_ok = hess_ok && rep.hessian_l2 <= bound + 1e-12;
    slack_ok = slack_ok && rep.slack >= -cx.cfg.solver.slack_tolerance * std::abs(m) - 1e-12;
    json j = to_json(rep);
    j["hessian_bound"] = bound;
    j["kato"] = to_json(kato);
    axes.push_back(j);
  }
  cx.w.csv_file("inequality.csv", table);
  cx.w.json_file("inequality.json", {{"mass", m}, {"axes", axes}, {"relaxed_certificate", to_json(cert)}});
  cx.summary.push_back("mass inequality: mass " + detail::g(m) + ", psi_l1 " + detail::g(cert.psi_l1));
  cx.assert_stage("hessian-bound", hess_ok, "hessian_l2 exceeds 16 pi grad_sup mass 1.1");
  cx.assert_stage("slack", slack_ok, "negative slack beyond the tolerance");
}

inline void pythagoras(detail::Context& cx) {
  const MetricChart chart = cx.chart();
  const HarmonicTriple t = cx.triple(chart);
  const auto pr = sweep_protocol(cx.cfg, cx.opt.threads);
  const auto b = pythagorean_batch(chart, t, pr.r, pr.n_pyth_pairs, cx.rng().split(1), pr.projection);
  CsvTable table = pythagorean_table();
  for (const auto& r : b.records) append_row(table, chart, r);
  cx.w.csv_file("pythagoras.csv", table);
  cx.w.json_file("pythagoras.json", {{"n_pairs", pr.n_pyth_pairs},
                                     {"failures", b.failures},
                                     {"defect_p50", json_number(b.p50)},
                                     {"defect_p90", json_number(b.p90)},
                                     {"defect_max", json_number(b.max)}});
  cx.summary.push_back("Pythagorean defect median " + detail::g(b.p50) + ", max " + detail::g(b.max));
  const bool ok = pr.n_pyth_pairs == 0 || double(b.failures) / pr.n_pyth_pairs < 0.01;
  cx.assert_stage("pythagoras", ok, std::to_string(b.failures) + " pairs failed");
}

inline void distort(detail::Context& cx) {
  const MetricChart chart = cx.chart();
  const HarmonicTriple t = cx.triple(chart);
  const auto pr = sweep_protocol(cx.cfg, cx.opt.threads);
  DistortionOptions dopt = pr.distortion;
  dopt.threads = cx.opt.threads;
  const auto rep = gh_distortion(chart, t, pr.r, pr.n_pairs, cx.rng().split(2), dopt);
  cx.w.json_file("distortion.json", to_json(rep));
  cx.w.csv_file("distortion_pairs.csv", distortion_pairs_table(rep));
  cx.summary.push_back("distortion median " + detail::g(rep.p50) + ", p90 " + detail::g(rep.p90) + ", max " +
                       detail::g(rep.max_defect));
  cx.assert_stage("distance-failures", rep.failure_fraction() < 0.01, std::to_string(rep.n_failed) + " pairs failed");
  cx.assert_stage("lipschitz", rep.lipschitz_violations == 0, "|u(x)| > grad_sup d(p, x) on some sample");
  cx.assert_stage("containment", rep.containment_violations == 0, "u(x) outside B(0, r + max_defect)");
}

inline void flow(detail::Context& cx) {
  const MetricChart chart = cx.chart();
  const HarmonicTriple t = cx.triple(chart);
  const auto pr = sweep_protocol(cx.cfg, cx.opt.threads);
  const auto b = flow_batch(chart, t, pr.n_targets, pr.image_radius, cx.rng().split(3), pr.flow);
  json traces = json::array();
  for (const auto& tr : b.traces) traces.push_back(to_json(tr));
  cx.w.json_file("flows.json", {{"n_targets", pr.n_targets},
                                {"failures", b.failures},
                                {"u_error_max", b.err_max},
                                {"traces", traces}});
  cx.w.csv_file("flows.csv", flow_table(b));
  cx.summary.push_back("flows: max |u(w) - target| " + detail::g(b.err_max));
  cx.assert_stage("flow-failures", b.failures == 0, std::to_string(b.failures) + " targets failed");
  cx.assert_stage("displacement", b.displacement_ok, "flow length exceeds grad_sup t (1 + 1e-3)");
}

inline void sweep(detail::Context& cx) {
  const auto& sw = cx.cfg.sweep;
  std::vector<double> values = sw.values;
  std::string param = sw.parameter;
  if (values.empty()) {
    // a one-point sweep at the configured parameters
    values = {cx.chart().monopole()};
    param.clear();
  }
  const FamilyConfig fam = cx.cfg.family;
  auto make = [&](double v) { return param.empty() ? make_chart(fam) : make_chart(fam, param, v); };
  const auto reps = stability_sweep(make, values, sweep_protocol(cx.cfg, cx.opt.threads));
  CsvTable table = stability_table();
  for (size_t i = 0; i < reps.size(); ++i) {
    append_row(table, reps[i]);
    json j = to_json(reps[i]);
    j["parameter"] = param;
    j["value"] = values[i];
    cx.w.json_file("sweep/point_" + std::to_string(i) + ".json", j);
    json traces = json::array();
    for (const auto& tr : reps[i].traces) traces.push_back(to_json(tr));
    cx.w.json_file("sweep/point_" + std::to_string(i) + "_flows.json", traces);
    cx.assert_stage("point_" + std::to_string(i), reps[i].failed_stage.empty(), reps[i].failed_stage);
  }
  cx.w.csv_file("stability.csv", table);
  json trends = json::array();
  if (reps.size() >= 3) {
    for (const auto& c : monotone_checks(reps)) {
      trends.push_back({{"quantity", c.name}, {"strictly_decreasing", c.passed}});
      cx.assert_stage("trend-" + c.name, c.passed, c.name + " is not strictly decreasing");
    }
  }
  bool disp = true;
  for (const auto& r : reps) disp = disp && r.displacement_ok;
  cx.assert_stage("displacement", disp, "a flow exceeded its displacement bound");
  cx.w.json_file("trends.json", trends);
  for (const auto& r : reps)
    cx.summary.push_back(to_string(r.family) + " " + detail::g(r.m) + ": mass " + detail::g(r.mass) +
                         ", hessian_l2 " + detail::g(r.hessian_l2) + ", defect p50 " + detail::g(r.distortion.p50) +
                         ", flow err " + detail::g(r.flow_err_max) +
                         (r.failed_stage.empty() ? "" : " [failed " + r.failed_stage + "]"));
}

}  // namespace pipeline

/// Runs one subcommand; writes the artifacts, a run summary, and the manifest last.
inline RunResult run(const std::string& subcommand, const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  const auto& subs = subcommands();
  if (std::find(subs.begin(), subs.end(), subcommand) == subs.end())
    throw InvalidArgument("unknown subcommand '" + subcommand + "'");
  const auto problems = validate(cfg);
  if (!problems.empty()) throw ValidationError(problems);

  RunResult res;
  res.manifest.subcommand = subcommand;
  res.manifest.config_hash = config_hash(cfg);
  res.manifest.started = detail::utc_now();
  const std::filesystem::path dir = opt.out_dir.empty() ? cfg.output.directory : opt.out_dir;
  std::filesystem::create_directories(dir);
  detail::clear_previous_run(dir);

  detail::ArtifactWriter w(dir, cfg.output);
  w.text_file("config.json", serialize_config(cfg));
  std::vector<std::string> summary;
  detail::Context cx{cfg, opt, w, res.manifest.stages, summary};
  try {
    if (subcommand == "check-af") pipeline::check_af(cx);
    else if (subcommand == "mass") pipeline::mass(cx);
    else if (subcommand == "harmonic") pipeline::harmonic(cx);
    else if (subcommand == "inequality") pipeline::inequality(cx);
    else if (subcommand == "pythagoras") pipeline::pythagoras(cx);
    else if (subcommand == "distort") pipeline::distort(cx);
    else if (subcommand == "flow") pipeline::flow(cx);
    else pipeline::sweep(cx);
  } catch (const Error& e) {
    res.manifest.stages.push_back({subcommand, false, e.what()});
  }

  for (const auto& s : res.manifest.stages)
    if (!s.ok && res.failing_stage.empty()) res.failing_stage = s.name;
  res.exit_code = res.failing_stage.empty() ? 0 : 1;

  std::ostringstream os;
  os << "afstab " << kToolVersion << " " << subcommand << "\n";
  os << "config " << res.manifest.config_hash << ", seed " << cfg.sampling.seed << "\n";
  for (const auto& l : summary) os << l << "\n";
  for (const auto& s : res.manifest.stages)
    os << (s.ok ? "ok     " : "FAILED ") << s.name << (s.message.empty() ? "" : ": " + s.message) << "\n";
  w.text_file("run_summary.txt", os.str());

  res.manifest.finished = detail::utc_now();
  res.manifest.artifacts = detail::hash_tree(dir);
  write_text((dir / "manifest.json").string(), to_json(res.manifest).dump(2) + "\n");
  return res;
}

/// Checks that every listed artifact exists with its recorded hash and that
/// nothing else lives in the run directory.
inline std::vector<std::string> verify_manifest(const std::filesystem::path& dir) {
  std::vector<std::string> problems;
  const json m = json::parse(read_text((dir / "manifest.json").string()));
  std::set<std::string> listed;
  for (const auto& a : m.at("artifacts")) {
    const std::string rel = a.at("path").get<std::string>();
    listed.insert(rel);
    const auto p = dir / rel;
    if (!std::filesystem::exists(p)) problems.push_back(rel + ": missing");
    else if (hex64(fnv1a64(read_text(p.string()))) != a.at("fnv1a64").get<std::string>())
      problems.push_back(rel + ": hash mismatch");
  }
  for (const auto& [rel, h] : detail::hash_tree(dir))
    if (!listed.count(rel)) problems.push_back(rel + ": not listed");
  return problems;
}

}  // namespace afstab
