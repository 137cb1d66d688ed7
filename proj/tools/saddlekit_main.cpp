#include <chrono>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "saddlekit/eam.hpp"
#include "saddlekit/experiments.hpp"

namespace {

using saddlekit::bench::ConfigError;
using saddlekit::bench::ExperimentConfig;

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::string setfl;
  std::string variants;
  int seeds = -1;
  int iterations = -1;
  int threads = -1;
  int seed_offset = -1;
};

void add_common(CLI::App* sub, CommonFlags& flags) {
  sub->add_option("--config", flags.config_path, "Configuration file (key = value with [sections])");
  sub->add_option("--out", flags.out_dir, "Output directory");
  sub->add_option("--seeds", flags.seeds, "Number of paired seeds");
  sub->add_option("--iterations", flags.iterations, "Iteration count");
  sub->add_option("--threads", flags.threads, "Thread budget (SADDLEKIT_THREADS as fallback)");
  sub->add_option("--seed-offset", flags.seed_offset, "First seed index (sharded execution)");
  sub->add_option("--setfl", flags.setfl, "setfl potential file (wvac)");
  sub->add_option("--variant", flags.variants, "Comma-separated variant list");
}

ExperimentConfig build_config(const std::string& experiment, const CommonFlags& flags) {
  ExperimentConfig cfg = ExperimentConfig::defaults_for(experiment);
  if (!flags.config_path.empty()) cfg.apply_file(flags.config_path);
  if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
  if (flags.seeds >= 0) cfg.seeds = flags.seeds;
  if (flags.iterations >= 0) cfg.iterations = flags.iterations;
  if (flags.threads >= 0) cfg.threads = flags.threads;
  if (flags.seed_offset >= 0) cfg.seed_offset = flags.seed_offset;
  if (!flags.setfl.empty()) cfg.setfl_path = flags.setfl;
  if (!flags.variants.empty()) {
    cfg.variants.clear();
    std::string item;
    std::stringstream ss(flags.variants);
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) cfg.variants.push_back(item);
    }
  }
  cfg.validate();
  return cfg;
}

int run_experiment(const std::string& experiment, const CommonFlags& flags) {
  ExperimentConfig cfg = build_config(experiment, flags);
  const auto t0 = std::chrono::steady_clock::now();
  using namespace saddlekit::bench;
  if (experiment == "neb2d") {
    emit_neb_report(cfg, run_neb_experiment(cfg));
  } else if (experiment == "sweep2d") {
    emit_sweep_report(cfg, run_sweep(cfg));
  } else if (experiment == "dimer2d") {
    emit_dimer_report(cfg, run_dimer_experiment(cfg));
  } else if (experiment == "wvac") {
    emit_neb_report(cfg, run_wvac_experiment(cfg));
  } else if (experiment == "rate2d") {
    emit_rate_report(cfg, run_rate_check(cfg));
  } else if (experiment == "projdemo") {
    emit_projdemo_report(cfg, run_projection_demo(cfg));
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  // Wall time goes to stdout, not into the report files, which stay
  // byte-identical across runs and thread budgets.
  std::cout << "wrote " << cfg.out_dir << " (" << wall << " s, " << cfg.resolved_threads()
            << " threads)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"saddlekit: uncertainty-aware NEB and Dimer saddle-search benchmarks"};
  app.require_subcommand(1);

  const std::vector<std::string> experiments = {"neb2d", "sweep2d", "dimer2d",
                                                "wvac",  "rate2d",  "projdemo"};
  std::vector<CommonFlags> flags(experiments.size());
  for (size_t i = 0; i < experiments.size(); ++i) {
    auto* sub = app.add_subcommand(experiments[i], "Run the " + experiments[i] + " experiment");
    add_common(sub, flags[i]);
  }

  std::string setfl_out = "wfs.setfl";
  auto* gen = app.add_subcommand("make-setfl",
                                 "Write the built-in synthetic tungsten potential to a file");
  gen->add_option("--out", setfl_out, "Output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      saddlekit::pot::write_setfl_file(setfl_out, saddlekit::pot::synthetic_tungsten_fs());
      std::cout << "wrote " << setfl_out << "\n";
      return 0;
    }
    for (size_t i = 0; i < experiments.size(); ++i) {
      if (app.get_subcommand(experiments[i])->parsed()) {
        return run_experiment(experiments[i], flags[i]);
      }
    }
    std::cerr << "no experiment selected\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
