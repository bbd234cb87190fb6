#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "hamcurv/experiment.hpp"
#include "hamcurv/version.hpp"

namespace {

struct CliArgs {
  std::string config;
  std::string out;
  int workers = 1;
  bool bit_repro = false;
};

void add_common(CLI::App* cmd, CliArgs& args) {
  cmd->add_option("--config", args.config, "experiment config file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", args.out, "output directory (overrides [output] dir)");
  cmd->add_option("--workers", args.workers, "worker pool size for Monte Carlo batches")
      ->check(CLI::PositiveNumber);
  cmd->add_flag("--bit-repro", args.bit_repro,
                "force fixed-arity deterministic reductions");
}

int run(const std::string& command, const CliArgs& args) {
  using namespace hamcurv;
  experiment::ExperimentConfig cfg;
  try {
    const auto raw = experiment::parse_config_file(args.config);
    cfg = experiment::load_config(raw, command);
  } catch (const Error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return experiment::kConfigError;
  }
  cfg.workers = args.workers;
  cfg.bit_repro = args.bit_repro;
  if (!args.out.empty()) cfg.out_dir = args.out;

  const auto result = experiment::run_command(cfg);
  std::printf("%s\n", result.summary.c_str());
  for (const auto& f : result.files) std::printf("wrote %s\n", f.c_str());
  return result.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Curvature and entropy-bound toolkit for Hamiltonian flows"};
  app.set_version_flag("--version", hamcurv::kVersion);
  app.require_subcommand(1);

  CliArgs args;
  std::string chosen;
  for (const char* name : {"curvature", "lyapunov", "bound", "verify"}) {
    auto* cmd = app.add_subcommand(
        name, std::string("run the ") + name + " pipeline from a config file");
    add_common(cmd, args);
    cmd->callback([&chosen, name] { chosen = name; });
  }

  CLI11_PARSE(app, argc, argv);
  return run(chosen, args);
}
