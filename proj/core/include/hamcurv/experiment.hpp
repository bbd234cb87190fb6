#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "hamcurv/entropy.hpp"
#include "hamcurv/systems.hpp"

/// Experiment runner: strict sectioned config files, command dispatch, JSON
/// and CSV reports.  The command surface is `curvature`, `lyapunov`, `bound`,
/// `verify`; exit codes: 0 ok, 2 config error, 3 hypothesis violation,
/// 4 numerical failure.
namespace hamcurv::experiment {

enum ExitCode : int {
  kOk = 0,
  kConfigError = 2,
  kHypothesisViolation = 3,
  kNumericalFailure = 4,
};

/// Flat sectioned key = value text, strict: unknown keys and malformed lines
/// are rejected with the line number.
struct RawConfig {
  struct Entry {
    std::string value;
    int line = 0;
  };
  std::map<std::string, Entry> kv;  ///< "section.key" -> entry
  std::string path;
};

RawConfig parse_config_text(const std::string& text, const std::string& path = "<inline>");
RawConfig parse_config_file(const std::string& path);

/// Typed, validated experiment description for one command.
struct ExperimentConfig {
  std::string command;

  // [system]
  std::string family;             // mechanical | geodesic2d | mechanical_on_metric
  int n = 0;
  std::string potential = "zero"; // zero | harmonic | cosine
  double potential_param = 0.0;
  std::string metric = "euclidean";  // euclidean | hyperbolic | sphere
  std::string topology = "unbounded";
  double period = 0.0;

  // [run]
  double energy = 0.0;
  std::uint64_t seed = 0;
  int sample_count = 0;
  double T = 0.0;
  double dt = 0.0;
  double renorm_interval = 0.0;
  double stencil_h = 0.02;
  double richardson_tol = 1e-6;
  double exclusion_cap = 0.05;
  bool with_rprime = false;
  std::vector<double> box_min, box_max;
  std::vector<std::string> suite;      // verify only
  bool inject_nonsymplectic = false;   // verify only (negative testing)

  // [output]
  std::string out_dir = ".";

  // command line
  int workers = 1;
  bool bit_repro = false;
};

/// Validate a raw config against the per-command schema and build the typed
/// config.  Throws ConfigError with line-level messages.
ExperimentConfig load_config(const RawConfig& raw, const std::string& command);

std::shared_ptr<const systems::HamiltonianSystem> build_system(const ExperimentConfig& cfg);

struct CommandResult {
  int exit_code = kOk;
  std::string report_json;              ///< contents written to report.json
  std::vector<std::string> files;       ///< paths written
  std::string summary;                  ///< one-line human summary
};

CommandResult cmd_curvature(const ExperimentConfig& cfg);
CommandResult cmd_lyapunov(const ExperimentConfig& cfg);
CommandResult cmd_bound(const ExperimentConfig& cfg);
CommandResult cmd_verify(const ExperimentConfig& cfg);

/// Dispatch by cfg.command; never throws (errors become exit codes + report).
CommandResult run_command(const ExperimentConfig& cfg);

/// report.json minus the volatile "meta" object; used for reproducibility
/// comparisons.
std::string stable_report_view(const std::string& report_json);

}  // namespace hamcurv::experiment
