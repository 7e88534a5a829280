#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>

#include "afstab/harness.hpp"

using namespace afstab;
namespace fs = std::filesystem;

namespace {

const char* kFlat = R"({
  "family": {"tag": "Flat"},
  "grid": {"N": 17, "R_out": 8.0},
  "sampling": {"seed": 5, "n_pairs": 4, "n_pyth_pairs": 2, "n_targets": 2}
})";

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("afstab_test_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<std::string> violations_of(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ValidationError& e) {
    return e.violations();
  }
  return {};
}

bool mentions(const std::vector<std::string>& v, const std::string& needle) {
  return std::any_of(v.begin(), v.end(), [&](const std::string& s) { return s.find(needle) != std::string::npos; });
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "manifest.json")
      out[fs::relative(e.path(), dir).generic_string()] = read_text(e.path().string());
  return out;
}

int cli(const std::string& args) {
  const int rc = std::system((std::string(AFSTAB_CLI) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(Config, MinimalFlatFillsDefaults) {
  const auto c = parse_config_text(R"({"family": {"tag": "Flat"}, "sampling": {"seed": 1}})");
  EXPECT_EQ(c.grid.n, 65);
  EXPECT_EQ(c.grid.r_out, 20.0);
  EXPECT_EQ(c.grid.bc, BoundaryPolicy::Corrected);
  EXPECT_EQ(c.solver.eps_grad, 1e-6);
  EXPECT_EQ(c.sampling.n_pairs, 200);
  EXPECT_FALSE(c.sampling.bg_kappa.has_value());
}

TEST(Config, TauBelowHalfRejected) {
  const auto v = violations_of(R"({"family": {"tag": "Flat", "decay": {"tau": 0.4}}, "sampling": {"seed": 1}})");
  ASSERT_EQ(v.size(), 1u);
  EXPECT_NE(v[0].find("tau must exceed 1/2"), std::string::npos);
}

TEST(Config, AllViolationsReported) {
  const auto v = violations_of(R"({
    "family": {"tag": "SchwarzschildIsotropic", "params": {"m": -1}, "decay": {"tau": 0.3}},
    "grid": {"N": 64, "colour": "red"},
    "solver": {"eps_grad": 0},
    "sampling": {"n_pairs": 0}
  })");
  EXPECT_TRUE(mentions(v, "tau must exceed 1/2"));
  EXPECT_TRUE(mentions(v, "grid.N: must be odd"));
  EXPECT_TRUE(mentions(v, "solver.eps_grad"));
  EXPECT_TRUE(mentions(v, "sampling.seed: required"));
  EXPECT_TRUE(mentions(v, "sampling.n_pairs"));
  EXPECT_TRUE(mentions(v, "grid.colour: unknown field"));
  EXPECT_TRUE(mentions(v, "family.params.m"));
  EXPECT_GE(v.size(), 7u);
}

TEST(Config, FamilyChecks) {
  EXPECT_TRUE(mentions(violations_of(R"({"family": {"tag": "Warped"}, "sampling": {"seed": 1}})"), "unknown family"));
  EXPECT_TRUE(mentions(violations_of(R"({"family": {"tag": "SchwarzschildIsotropic"}, "sampling": {"seed": 1}})"),
                       "family.params.m: required"));
  EXPECT_TRUE(mentions(violations_of(R"({"family": {"tag": "Flat"}, "sampling": {"seed": 1},
                                         "sweep": {"parameter": "m", "values": [0.1]}})"),
                       "sweep.parameter"));
  EXPECT_TRUE(mentions(violations_of(R"({"family": {"tag": "SchwarzschildIsotropic", "params": {"m": 0.1}},
                                         "sampling": {"seed": 1}, "sweep": {"parameter": "m", "values": [0.1, 0.2]}})"),
                       "strictly decreasing"));
  EXPECT_TRUE(mentions(violations_of(R"({"family": {"tag": "Flat", "domain": {"r_out": 10}}, "sampling": {"seed": 1}})"),
                       "grid.R_out: must not exceed"));
  EXPECT_TRUE(mentions(violations_of(R"({"family": {"tag": "Flat"}, "sampling": {"seed": -3}})"), "sampling.seed"));
}

TEST(Config, ParseErrorNamesLine) {
  try {
    parse_config_text("{\n  \"family\": {\"tag\": \"Flat\"},\n  \"grid\": {\"N\": }\n}");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_config("/nonexistent/afstab.json"), ParseError);
}

TEST(Config, RoundTripsShippedConfigs) {
  int n = 0;
  for (const auto& e : fs::directory_iterator(fs::path(AFSTAB_SOURCE_DIR) / "configs")) {
    if (e.path().extension() != ".json") continue;
    const auto c = parse_config(e.path().string());
    const std::string once = serialize_config(c);
    const auto again = parse_config_text(once);
    EXPECT_EQ(serialize_config(again), once) << e.path();
    EXPECT_EQ(config_hash(again), config_hash(c));
    ++n;
  }
  EXPECT_GE(n, 5);
}

TEST(Config, ChartTranslation) {
  const auto c = parse_config_text(R"({
    "family": {"tag": "Perturbed", "params": {"A": 0.1},
               "bumps": [{"amplitude": -0.05, "width": 2, "center": [1, 0, 0]}]},
    "sampling": {"seed": 1}, "sweep": {"parameter": "A", "values": [0.1, 0.05]}})");
  const auto chart = make_chart(c.family, "A", 0.05);
  EXPECT_EQ(chart.family, MetricFamily::Perturbed);
  EXPECT_EQ(chart.monopole(), 0.05);
  ASSERT_EQ(chart.bumps.size(), 1u);
  EXPECT_EQ(chart.bumps[0].center, Vec3(1, 0, 0));
}

TEST(Harness, FlatMassAndManifest) {
  auto cfg = parse_config_text(kFlat);
  const auto dir = scratch("mass");
  const auto res = run("mass", cfg, {dir.string(), 1});
  EXPECT_EQ(res.exit_code, 0);
  const json m = json::parse(read_text((dir / "mass.json").string()));
  EXPECT_EQ(m["extrapolated"].get<double>(), 0.0);
  EXPECT_TRUE(verify_manifest(dir).empty());
  const json man = json::parse(read_text((dir / "manifest.json").string()));
  EXPECT_EQ(man["config_hash"], config_hash(cfg));
  EXPECT_EQ(man["tool_version"], kToolVersion);
  EXPECT_FALSE(man["started"].get<std::string>().empty());
}

TEST(Harness, RerunIsByteIdenticalAndStaleFilesGo) {
  auto cfg = parse_config_text(kFlat);
  const auto dir = scratch("rerun");
  ASSERT_EQ(run("sweep", cfg, {dir.string(), 1}).exit_code, 0);
  const auto first = snapshot(dir);
  ASSERT_EQ(run("sweep", cfg, {dir.string(), 2}).exit_code, 0);
  EXPECT_EQ(snapshot(dir), first);

  ASSERT_EQ(run("harmonic", cfg, {dir.string(), 1}).exit_code, 0);
  EXPECT_FALSE(fs::exists(dir / "stability.csv"));
  EXPECT_TRUE(fs::exists(dir / "u1.bin"));
  EXPECT_TRUE(verify_manifest(dir).empty());
  write_text((dir / "stray.txt").string(), "x");
  EXPECT_EQ(verify_manifest(dir).size(), 1u);
}

TEST(Harness, FailingStageIsNamedAndArtifactsKept) {
  auto cfg = parse_config_text(kFlat);
  cfg.sampling.r = 7.5;  // the distortion ball leaves the grid
  const auto dir = scratch("fail");
  const auto res = run("distort", cfg, {dir.string(), 1});
  EXPECT_EQ(res.exit_code, 1);
  EXPECT_EQ(res.failing_stage, "distort");
  EXPECT_TRUE(fs::exists(dir / "config.json"));
  EXPECT_TRUE(fs::exists(dir / "run_summary.txt"));
  EXPECT_TRUE(verify_manifest(dir).empty());
}

TEST(Harness, RejectsBeforeCompute) {
  auto cfg = parse_config_text(kFlat);
  cfg.solver.eps_grad = 0.0;
  const auto dir = scratch("reject");
  EXPECT_THROW(run("inequality", cfg, {dir.string(), 1}), ValidationError);
  EXPECT_FALSE(fs::exists(dir));
  EXPECT_THROW(run("plot", parse_config_text(kFlat), {dir.string(), 1}), InvalidArgument);
}

TEST(Harness, EverySubcommandRunsOnFlat) {
  auto cfg = parse_config_text(kFlat);
  cfg.sampling.r = 2.0;
  cfg.sampling.bg_radii = {0.5, 1.0, 1.5};
  cfg.sampling.bg_kappa = 0.1;
  for (const auto& s : subcommands()) {
    const auto dir = scratch("all_" + s);
    const auto res = run(s, cfg, {dir.string(), 1});
    EXPECT_EQ(res.exit_code, 0) << s << ": " << res.failing_stage;
    EXPECT_TRUE(verify_manifest(dir).empty()) << s;
  }
}

TEST(Cli, StagesInSeparateProcesses) {
  const auto dir = scratch("cli");
  fs::create_directories(dir);
  const auto cfg_path = dir / "flat.json";
  write_text(cfg_path.string(), kFlat);
  EXPECT_EQ(cli("harmonic --config " + cfg_path.string() + " --out " + (dir / "h").string()), 0);
  EXPECT_EQ(cli("flow --config " + cfg_path.string() + " --out " + (dir / "f").string() + " --threads 2"), 0);
  EXPECT_TRUE(fs::exists(dir / "h" / "u2.bin"));
  EXPECT_TRUE(fs::exists(dir / "f" / "flows.json"));

  EXPECT_EQ(cli("mass --config " + cfg_path.string() + " --out " + (dir / "s").string() + " --seed 99"), 0);
  const json c = json::parse(read_text((dir / "s" / "config.json").string()));
  EXPECT_EQ(c["sampling"]["seed"].get<std::uint64_t>(), 99u);

  write_text((dir / "bad.json").string(), R"({"family": {"tag": "Flat", "decay": {"tau": 0.4}}, "sampling": {"seed": 1}})");
  EXPECT_EQ(cli("mass --config " + (dir / "bad.json").string() + " --out " + (dir / "b").string()), 2);
  EXPECT_FALSE(fs::exists(dir / "b"));
  EXPECT_NE(cli("mass"), 0);
  EXPECT_NE(cli("bogus --config " + cfg_path.string()), 0);
}
