// afstab <subcommand> --config <path> [--out <dir>] [--threads <n>] [--seed <u64>]

#include <iostream>
#include <map>

#include "CLI11.hpp"

#include "afstab/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"afstab: numerical laboratory for almost-flat stability"};
  app.require_subcommand(1, 1);
  std::string config_path, out_dir;
  int threads = 1;
  std::optional<std::uint64_t> seed;

  const std::map<std::string, std::string> about{
      {"check-af", "curvature and decay certificate, Bishop-Gromov volumes"},
      {"mass", "ADM mass by extrapolation"},
      {"harmonic", "solve the harmonic triple"},
      {"inequality", "harmonic-function mass integral and relaxed certificate"},
      {"pythagoras", "Pythagorean defect over sampled pairs"},
      {"distort", "distortion of the harmonic map on a geodesic ball"},
      {"flow", "gradient-flow reachability"},
      {"sweep", "all stages over a decreasing parameter sweep"}};
  for (const auto& name : afstab::subcommands()) {
    auto* sub = app.add_subcommand(name, about.at(name));
    sub->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory (overrides output.directory)");
    sub->add_option("--threads", threads, "worker threads")->check(CLI::Range(1, 256));
    sub->add_option("--seed", seed, "seed override");
  }
  CLI11_PARSE(app, argc, argv);
  const std::string sub = app.get_subcommands().front()->get_name();

  afstab::ExperimentConfig cfg;
  try {
    cfg = afstab::parse_config(config_path);
  } catch (const afstab::ValidationError& e) {
    std::cerr << "invalid config " << config_path << ":\n";
    for (const auto& v : e.violations()) std::cerr << "  " << v << "\n";
    return 2;
  } catch (const afstab::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  if (seed) cfg.sampling.seed = *seed;

  try {
    const auto res = afstab::run(sub, cfg, {out_dir, threads});
    const std::string dir = out_dir.empty() ? cfg.output.directory : out_dir;
    std::cout << afstab::read_text(dir + "/run_summary.txt");
    if (res.exit_code != 0) std::cerr << "stage failed: " << res.failing_stage << "\n";
    return res.exit_code;
  } catch (const afstab::Error& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
