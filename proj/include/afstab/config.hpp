#pragma once

// Experiment configuration: a JSON document with sections family, grid,
// solver, sampling, sweep and output. Parsing collects every violation.

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "afstab/gh.hpp"
#include "afstab/io.hpp"

namespace afstab {

struct BumpConfig {
  double amplitude = 0.0;
  double width = 1.0;
  Vec3 center = Vec3::Zero();
};

struct FamilyConfig {
  MetricFamily tag = MetricFamily::Flat;
  std::map<std::string, double> params;
  std::vector<BumpConfig> bumps;  // Perturbed only
  Domain domain;
  Decay decay;
};

struct GridConfig {
  int n = 65;
  double r_out = 20.0;
  BoundaryPolicy bc = BoundaryPolicy::Corrected;
  Vec3 base_point = Vec3(2, 0, 0);
};

struct XFieldConfig {
  bool enabled = false;
  BumpConfig w;
  double coefficient = 1.0;
};

struct SolverConfig {
  double tol = 1e-10;
  int max_iterations = 50000;
  double eps_grad = 1e-6;  // relative to sup |grad u|
  std::vector<double> mass_radii;  // empty: defaults clipped to the chart
  int quadrature_order = 32;
  double slack_tolerance = 0.05;  // allowed negative slack, relative to the mass
  XFieldConfig x_field;
};

struct SamplingConfig {
  double r = 3.0;
  double rho = 0.0;  // 0: two grid cells
  int n_pairs = 200;
  int n_pyth_pairs = 50;
  int n_targets = 20;
  double image_radius = 2.0;
  double flow_radius = 6.0;
  std::uint64_t seed = 0;
  std::vector<double> bg_radii{0.5, 1.0, 1.5, 2.0, 2.5, 3.0};
  std::optional<double> bg_kappa;  // empty: certified
  int certification_per_sphere = 48;
};

struct SweepConfig {
  std::string parameter;
  std::vector<double> values;
};

struct OutputConfig {
  std::string directory = "out";
  std::vector<std::string> formats{"json", "csv", "bin"};

  bool wants(const std::string& f) const { return std::find(formats.begin(), formats.end(), f) != formats.end(); }
};

struct ExperimentConfig {
  FamilyConfig family;
  GridConfig grid;
  SolverConfig solver;
  SamplingConfig sampling;
  SweepConfig sweep;
  OutputConfig output;
};

// ---------------------------------------------------------------------------
// Serialization

inline json bump_to_json(const BumpConfig& b) {
  return {{"amplitude", b.amplitude}, {"width", b.width}, {"center", json_vec(b.center)}};
}

inline json to_json(const ExperimentConfig& c) {
  json params = json::object();
  for (const auto& [k, v] : c.family.params) params[k] = v;
  json bumps = json::array();
  for (const auto& b : c.family.bumps) bumps.push_back(bump_to_json(b));
  json j;
  j["family"] = {{"tag", to_string(c.family.tag)},
                 {"params", params},
                 {"bumps", bumps},
                 {"domain", {{"r_out", c.family.domain.r_out}, {"r_exc", c.family.domain.r_exc}}},
                 {"decay", {{"b", c.family.decay.b}, {"tau", c.family.decay.tau}}}};
  j["grid"] = {{"N", c.grid.n}, {"R_out", c.grid.r_out}, {"bc", to_string(c.grid.bc)},
               {"base_point", json_vec(c.grid.base_point)}};
  json xf = {{"enabled", c.solver.x_field.enabled}, {"w", bump_to_json(c.solver.x_field.w)},
             {"coefficient", c.solver.x_field.coefficient}};
  j["solver"] = {{"tol", c.solver.tol},
                 {"max_iterations", c.solver.max_iterations},
                 {"eps_grad", c.solver.eps_grad},
                 {"mass_radii", c.solver.mass_radii},
                 {"quadrature_order", c.solver.quadrature_order},
                 {"slack_tolerance", c.solver.slack_tolerance},
                 {"x_field", xf}};
  j["sampling"] = {{"r", c.sampling.r},
                   {"rho", c.sampling.rho},
                   {"n_pairs", c.sampling.n_pairs},
                   {"n_pyth_pairs", c.sampling.n_pyth_pairs},
                   {"n_targets", c.sampling.n_targets},
                   {"image_radius", c.sampling.image_radius},
                   {"flow_radius", c.sampling.flow_radius},
                   {"seed", c.sampling.seed},
                   {"bg_radii", c.sampling.bg_radii},
                   {"bg_kappa", c.sampling.bg_kappa ? json(*c.sampling.bg_kappa) : json("certified")},
                   {"certification_per_sphere", c.sampling.certification_per_sphere}};
  j["sweep"] = {{"parameter", c.sweep.parameter}, {"values", c.sweep.values}};
  j["output"] = {{"directory", c.output.directory}, {"formats", c.output.formats}};
  return j;
}

inline std::string serialize_config(const ExperimentConfig& c) { return to_json(c).dump(2) + "\n"; }

inline std::string config_hash(const ExperimentConfig& c) { return hex64(fnv1a64(to_json(c).dump())); }

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

// Typed field reader that records violations instead of throwing.
class Reader {
 public:
  explicit Reader(std::vector<std::string>& errs) : errs_(errs) {}

  void fail(const std::string& path, const std::string& msg) { errs_.push_back(path + ": " + msg); }

  // Flags keys outside `allowed`.
  void keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) {
      fail(path, "must be an object");
      return;
    }
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : j.items())
      if (!ok.count(k)) fail(path + "." + k, "unknown field");
  }

  const json* child(const json& j, const std::string& key) {
    if (!j.is_object() || !j.contains(key)) return nullptr;
    return &j.at(key);
  }

  void number(const json& j, const std::string& path, const std::string& key, double& out) {
    if (const json* v = child(j, key)) {
      if (v->is_number()) out = v->get<double>();
      else fail(path + "." + key, "must be a number");
    }
  }

  void integer(const json& j, const std::string& path, const std::string& key, int& out) {
    if (const json* v = child(j, key)) {
      if (v->is_number_integer()) out = v->get<int>();
      else fail(path + "." + key, "must be an integer");
    }
  }

  void boolean(const json& j, const std::string& path, const std::string& key, bool& out) {
    if (const json* v = child(j, key)) {
      if (v->is_boolean()) out = v->get<bool>();
      else fail(path + "." + key, "must be true or false");
    }
  }

  void string(const json& j, const std::string& path, const std::string& key, std::string& out) {
    if (const json* v = child(j, key)) {
      if (v->is_string()) out = v->get<std::string>();
      else fail(path + "." + key, "must be a string");
    }
  }

  void vec3(const json& j, const std::string& path, const std::string& key, Vec3& out) {
    if (const json* v = child(j, key)) {
      if (v->is_array() && v->size() == 3 && std::all_of(v->begin(), v->end(), [](const json& e) { return e.is_number(); }))
        out = vec_from_json(*v);
      else
        fail(path + "." + key, "must be an array of 3 numbers");
    }
  }

  void numbers(const json& j, const std::string& path, const std::string& key, std::vector<double>& out) {
    if (const json* v = child(j, key)) {
      if (!v->is_array() || !std::all_of(v->begin(), v->end(), [](const json& e) { return e.is_number(); })) {
        fail(path + "." + key, "must be an array of numbers");
        return;
      }
      out.clear();
      for (const auto& e : *v) out.push_back(e.get<double>());
    }
  }

  void bump(const json& j, const std::string& path, BumpConfig& b) {
    keys(j, path, {"amplitude", "width", "center"});
    number(j, path, "amplitude", b.amplitude);
    number(j, path, "width", b.width);
    vec3(j, path, "center", b.center);
  }

 private:
  std::vector<std::string>& errs_;
};

// 1-based line of a byte offset.
inline int line_of(const std::string& text, size_t byte) {
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + std::min(byte, text.size()), '\n'));
}

}  // namespace detail

/// Range checks that need the whole config.
inline std::vector<std::string> validate(const ExperimentConfig& c) {
  std::vector<std::string> e;
  auto need = [&](bool ok, const std::string& what) {
    if (!ok) e.push_back(what);
  };
  const auto& f = c.family;
  need(f.domain.r_out > 0, "family.domain.r_out: must be positive");
  need(f.domain.r_exc >= 0 && f.domain.r_exc < f.domain.r_out, "family.domain.r_exc: must lie in [0, r_out)");
  need(f.decay.b > 0, "family.decay.b: must be positive");
  need(f.decay.tau > 0.5, "family.decay.tau: tau must exceed 1/2");
  auto param_range = [&](const std::string& k, double lo, bool open_lo) {
    auto it = f.params.find(k);
    if (it == f.params.end()) return;
    const double v = it->second;
    need(open_lo ? v > lo : v >= lo,
         "family.params." + k + ": must be " + (open_lo ? "> " : ">= ") + fmt_double(lo));
  };
  std::set<std::string> allowed;
  switch (f.tag) {
    case MetricFamily::Flat: break;
    case MetricFamily::SchwarzschildIsotropic:
      allowed = {"m", "core_radius"};
      need(f.params.count("m") == 1, "family.params.m: required for SchwarzschildIsotropic");
      param_range("m", 0.0, false);
      break;
    case MetricFamily::ConformallyFlat:
      allowed = {"A", "core_radius", "gauss_amp", "gauss_width", "gauss_cx", "gauss_cy", "gauss_cz"};
      param_range("gauss_width", 0.0, true);
      break;
    case MetricFamily::Perturbed: allowed = {"A", "core_radius"}; break;
  }
  param_range("core_radius", 0.0, true);
  for (const auto& [k, v] : f.params) {
    need(allowed.count(k) == 1, "family.params." + k + ": not a parameter of " + to_string(f.tag));
    need(std::isfinite(v), "family.params." + k + ": must be finite");
  }
  need(f.bumps.empty() || f.tag == MetricFamily::Perturbed, "family.bumps: only the Perturbed family takes bumps");
  for (size_t i = 0; i < f.bumps.size(); ++i)
    need(f.bumps[i].width > 0, "family.bumps[" + std::to_string(i) + "].width: must be positive");

  const auto& g = c.grid;
  need(g.n % 2 == 1, "grid.N: must be odd (got " + std::to_string(g.n) + ")");
  need(g.n >= 17 && g.n <= 513, "grid.N: must lie in [17, 513]");
  need(g.r_out > 0, "grid.R_out: must be positive");
  need(g.r_out <= f.domain.r_out, "grid.R_out: must not exceed family.domain.r_out");
  need(g.base_point.cwiseAbs().maxCoeff() < g.r_out, "grid.base_point: must lie inside the grid");

  const auto& s = c.solver;
  need(s.tol > 0 && s.tol <= 1e-2, "solver.tol: must lie in (0, 1e-2]");
  need(s.max_iterations >= 1, "solver.max_iterations: must be >= 1");
  need(s.eps_grad > 0 && s.eps_grad < 1, "solver.eps_grad: must lie in (0, 1)");
  need(s.quadrature_order >= 4 && s.quadrature_order <= 256, "solver.quadrature_order: must lie in [4, 256]");
  need(s.slack_tolerance >= 0, "solver.slack_tolerance: must be >= 0");
  if (!s.mass_radii.empty()) {
    need(s.mass_radii.size() >= 3, "solver.mass_radii: needs at least 3 radii");
    for (size_t i = 0; i < s.mass_radii.size(); ++i) {
      need(s.mass_radii[i] > 1.0 && s.mass_radii[i] <= f.domain.r_out,
           "solver.mass_radii[" + std::to_string(i) + "]: must lie in (1, r_out]");
      if (i) need(s.mass_radii[i] > s.mass_radii[i - 1], "solver.mass_radii: must be strictly increasing");
    }
  }
  if (s.x_field.enabled) need(s.x_field.w.width > 0, "solver.x_field.w.width: must be positive");

  const auto& p = c.sampling;
  need(p.r > 0, "sampling.r: must be positive");
  need(p.rho >= 0, "sampling.rho: must be >= 0");
  need(p.n_pairs >= 1, "sampling.n_pairs: must be >= 1");
  need(p.n_pyth_pairs >= 0, "sampling.n_pyth_pairs: must be >= 0");
  need(p.n_targets >= 0, "sampling.n_targets: must be >= 0");
  need(p.image_radius > 0, "sampling.image_radius: must be positive");
  need(p.flow_radius > 0, "sampling.flow_radius: must be positive");
  need(p.certification_per_sphere >= 4, "sampling.certification_per_sphere: must be >= 4");
  need(!p.bg_radii.empty(), "sampling.bg_radii: must not be empty");
  for (size_t i = 0; i < p.bg_radii.size(); ++i) {
    need(p.bg_radii[i] > 0, "sampling.bg_radii[" + std::to_string(i) + "]: must be positive");
    if (i) need(p.bg_radii[i] > p.bg_radii[i - 1], "sampling.bg_radii: must be strictly increasing");
  }
  if (p.bg_kappa) need(*p.bg_kappa >= 0, "sampling.bg_kappa: must be >= 0 or \"certified\"");

  if (!c.sweep.values.empty()) {
    const std::string& k = c.sweep.parameter;
    need(allowed.count(k) == 1, "sweep.parameter: '" + k + "' is not a parameter of " + to_string(f.tag));
    for (size_t i = 1; i < c.sweep.values.size(); ++i)
      need(c.sweep.values[i] < c.sweep.values[i - 1], "sweep.values: must be strictly decreasing");
  }

  need(!c.output.directory.empty(), "output.directory: must not be empty");
  for (const auto& fm : c.output.formats)
    need(fm == "json" || fm == "csv" || fm == "bin", "output.formats: unknown format '" + fm + "'");
  return e;
}

/// Parses and validates; ParseError on malformed text, ValidationError with
/// every violation otherwise.
inline ExperimentConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("line " + std::to_string(detail::line_of(text, e.byte > 0 ? e.byte - 1 : 0)) + ": " + e.what());
  }
  std::vector<std::string> errs;
  detail::Reader rd(errs);
  ExperimentConfig c;
  rd.keys(j, "config", {"family", "grid", "solver", "sampling", "sweep", "output"});

  if (const json* f = rd.child(j, "family")) {
    rd.keys(*f, "family", {"tag", "params", "bumps", "domain", "decay"});
    std::string tag;
    rd.string(*f, "family", "tag", tag);
    if (tag.empty()) {
      errs.push_back("family.tag: required");
    } else {
      try {
        c.family.tag = family_from_string(tag);
      } catch (const Error&) {
        errs.push_back("family.tag: unknown family '" + tag + "'");
      }
    }
    if (const json* p = rd.child(*f, "params")) {
      if (!p->is_object()) rd.fail("family.params", "must be an object");
      else
        for (const auto& [k, v] : p->items()) {
          if (v.is_number()) c.family.params[k] = v.get<double>();
          else rd.fail("family.params." + k, "must be a number");
        }
    }
    if (const json* b = rd.child(*f, "bumps")) {
      if (!b->is_array()) rd.fail("family.bumps", "must be an array");
      else
        for (size_t i = 0; i < b->size(); ++i) {
          BumpConfig bc;
          rd.bump((*b)[i], "family.bumps[" + std::to_string(i) + "]", bc);
          c.family.bumps.push_back(bc);
        }
    }
    if (const json* d = rd.child(*f, "domain")) {
      rd.keys(*d, "family.domain", {"r_out", "r_exc"});
      rd.number(*d, "family.domain", "r_out", c.family.domain.r_out);
      rd.number(*d, "family.domain", "r_exc", c.family.domain.r_exc);
    }
    if (const json* d = rd.child(*f, "decay")) {
      rd.keys(*d, "family.decay", {"b", "tau"});
      rd.number(*d, "family.decay", "b", c.family.decay.b);
      rd.number(*d, "family.decay", "tau", c.family.decay.tau);
    }
  } else {
    errs.push_back("family: required section");
  }

  if (const json* g = rd.child(j, "grid")) {
    rd.keys(*g, "grid", {"N", "R_out", "bc", "base_point"});
    rd.integer(*g, "grid", "N", c.grid.n);
    rd.number(*g, "grid", "R_out", c.grid.r_out);
    std::string bc = to_string(c.grid.bc);
    rd.string(*g, "grid", "bc", bc);
    try {
      c.grid.bc = boundary_policy_from_string(bc);
    } catch (const Error&) {
      errs.push_back("grid.bc: must be 'plain' or 'corrected'");
    }
    rd.vec3(*g, "grid", "base_point", c.grid.base_point);
  }

  if (const json* s = rd.child(j, "solver")) {
    rd.keys(*s, "solver", {"tol", "max_iterations", "eps_grad", "mass_radii", "quadrature_order", "slack_tolerance", "x_field"});
    rd.number(*s, "solver", "tol", c.solver.tol);
    rd.integer(*s, "solver", "max_iterations", c.solver.max_iterations);
    rd.number(*s, "solver", "eps_grad", c.solver.eps_grad);
    rd.numbers(*s, "solver", "mass_radii", c.solver.mass_radii);
    rd.integer(*s, "solver", "quadrature_order", c.solver.quadrature_order);
    rd.number(*s, "solver", "slack_tolerance", c.solver.slack_tolerance);
    if (const json* x = rd.child(*s, "x_field")) {
      rd.keys(*x, "solver.x_field", {"enabled", "w", "coefficient"});
      rd.boolean(*x, "solver.x_field", "enabled", c.solver.x_field.enabled);
      if (const json* w = rd.child(*x, "w")) rd.bump(*w, "solver.x_field.w", c.solver.x_field.w);
      rd.number(*x, "solver.x_field", "coefficient", c.solver.x_field.coefficient);
    }
  }

  if (const json* p = rd.child(j, "sampling")) {
    rd.keys(*p, "sampling", {"r", "rho", "n_pairs", "n_pyth_pairs", "n_targets", "image_radius", "flow_radius", "seed",
                             "bg_radii", "bg_kappa", "certification_per_sphere"});
    rd.number(*p, "sampling", "r", c.sampling.r);
    rd.number(*p, "sampling", "rho", c.sampling.rho);
    rd.integer(*p, "sampling", "n_pairs", c.sampling.n_pairs);
    rd.integer(*p, "sampling", "n_pyth_pairs", c.sampling.n_pyth_pairs);
    rd.integer(*p, "sampling", "n_targets", c.sampling.n_targets);
    rd.number(*p, "sampling", "image_radius", c.sampling.image_radius);
    rd.number(*p, "sampling", "flow_radius", c.sampling.flow_radius);
    if (const json* s = rd.child(*p, "seed")) {
      if (s->is_number_unsigned()) c.sampling.seed = s->get<std::uint64_t>();
      else if (s->is_number_integer() && s->get<std::int64_t>() >= 0) c.sampling.seed = s->get<std::uint64_t>();
      else rd.fail("sampling.seed", "must be an unsigned 64-bit integer");
    } else {
      errs.push_back("sampling.seed: required");
    }
    rd.numbers(*p, "sampling", "bg_radii", c.sampling.bg_radii);
    if (const json* k = rd.child(*p, "bg_kappa")) {
      if (k->is_number()) c.sampling.bg_kappa = k->get<double>();
      else if (!(k->is_string() && k->get<std::string>() == "certified"))
        rd.fail("sampling.bg_kappa", "must be a number or \"certified\"");
    }
    rd.integer(*p, "sampling", "certification_per_sphere", c.sampling.certification_per_sphere);
  } else {
    errs.push_back("sampling.seed: required");
  }

  if (const json* s = rd.child(j, "sweep")) {
    rd.keys(*s, "sweep", {"parameter", "values"});
    rd.string(*s, "sweep", "parameter", c.sweep.parameter);
    rd.numbers(*s, "sweep", "values", c.sweep.values);
  }

  if (const json* o = rd.child(j, "output")) {
    rd.keys(*o, "output", {"directory", "formats"});
    rd.string(*o, "output", "directory", c.output.directory);
    if (const json* fm = rd.child(*o, "formats")) {
      if (!fm->is_array() || !std::all_of(fm->begin(), fm->end(), [](const json& e) { return e.is_string(); }))
        rd.fail("output.formats", "must be an array of strings");
      else
        c.output.formats = fm->get<std::vector<std::string>>();
    }
  }

  // fill family defaults so serialization is explicit
  if (c.family.tag == MetricFamily::SchwarzschildIsotropic || c.family.tag == MetricFamily::ConformallyFlat ||
      c.family.tag == MetricFamily::Perturbed)
    c.family.params.emplace("core_radius", 1.0);
  if (c.family.tag == MetricFamily::ConformallyFlat || c.family.tag == MetricFamily::Perturbed)
    c.family.params.emplace("A", 0.0);

  for (auto& v : validate(c)) errs.push_back(std::move(v));
  if (!errs.empty()) throw ValidationError(errs);
  return c;
}

inline ExperimentConfig parse_config(const std::string& path) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const Error& e) {
    throw ParseError(std::string(e.what()));
  }
  return parse_config_text(text);
}

// ---------------------------------------------------------------------------
// Translation into library objects

inline Bump make_bump(const BumpConfig& b) {
  Bump out;
  out.amplitude = b.amplitude;
  out.width = b.width;
  out.center = b.center;
  return out;
}

/// Chart for the family block, with `override_param` set to `value` if given.
inline MetricChart make_chart(const FamilyConfig& f, const std::string& override_param = "",
                              std::optional<double> value = std::nullopt) {
  auto params = f.params;
  if (value) params[override_param] = *value;
  auto get = [&](const std::string& k, double d) {
    auto it = params.find(k);
    return it == params.end() ? d : it->second;
  };
  MetricChart c;
  switch (f.tag) {
    case MetricFamily::Flat: c = MetricChart::flat(f.domain.r_out); break;
    case MetricFamily::SchwarzschildIsotropic:
      c = MetricChart::schwarzschild(get("m", 0.0), f.domain.r_out, get("core_radius", 1.0));
      break;
    case MetricFamily::ConformallyFlat:
      c = MetricChart::conformally_flat(get("A", 0.0), get("gauss_amp", 0.0), get("gauss_width", 1.0),
                                        Vec3(get("gauss_cx", 0), get("gauss_cy", 0), get("gauss_cz", 0)),
                                        f.domain.r_out, get("core_radius", 1.0));
      break;
    case MetricFamily::Perturbed: {
      std::vector<Bump> bumps;
      for (const auto& b : f.bumps) bumps.push_back(make_bump(b));
      c = MetricChart::perturbed(get("A", 0.0), bumps, f.domain.r_out, get("core_radius", 1.0));
      break;
    }
  }
  c.domain.r_exc = f.domain.r_exc;
  c.decay = f.decay;
  return c;
}

inline TripleOptions triple_options(const ExperimentConfig& c, int threads) {
  TripleOptions o;
  o.bc = c.grid.bc;
  o.solver.tol = c.solver.tol;
  o.solver.max_iterations = c.solver.max_iterations;
  o.base_point = c.grid.base_point;
  o.threads = threads;
  return o;
}

inline SweepProtocol sweep_protocol(const ExperimentConfig& c, int threads) {
  SweepProtocol pr;
  pr.grid = Grid(c.grid.n, c.grid.r_out);
  pr.triple = triple_options(c, threads);
  pr.eps_grad_relative = c.solver.eps_grad;
  pr.r = c.sampling.r;
  pr.n_pairs = c.sampling.n_pairs;
  pr.n_pyth_pairs = c.sampling.n_pyth_pairs;
  pr.n_targets = c.sampling.n_targets;
  pr.image_radius = c.sampling.image_radius;
  pr.seed = c.sampling.seed;
  pr.threads = threads;
  pr.certification_per_sphere = c.sampling.certification_per_sphere;
  pr.mass_radii = c.solver.mass_radii;
  pr.quadrature_order = c.solver.quadrature_order;
  pr.flow.domain_radius = c.sampling.flow_radius;
  pr.flow.rho = c.sampling.rho;
  pr.projection.rho = c.sampling.rho;
  return pr;
}

}  // namespace afstab
