#include "hamcurv/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hamcurv/exec.hpp"
#include "hamcurv/flow.hpp"
#include "hamcurv/jacobi.hpp"
#include "hamcurv/version.hpp"

namespace hamcurv::experiment {

using json = nlohmann::ordered_json;

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

/// Locale-independent shortest round-trip formatting.
std::string fmt(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const RawConfig::Entry& e, const std::string& key) {
  const std::string t = trim(e.value);
  double v = 0.0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc{} || res.ptr != t.data() + t.size())
    throw ConfigError("line " + std::to_string(e.line) + ": key '" + key +
                      "' expects a number, got '" + e.value + "'");
  return v;
}

long long parse_int(const RawConfig::Entry& e, const std::string& key) {
  const std::string t = trim(e.value);
  long long v = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc{} || res.ptr != t.data() + t.size())
    throw ConfigError("line " + std::to_string(e.line) + ": key '" + key +
                      "' expects an integer, got '" + e.value + "'");
  return v;
}

bool parse_bool(const RawConfig::Entry& e, const std::string& key) {
  const std::string t = trim(e.value);
  if (t == "true") return true;
  if (t == "false") return false;
  throw ConfigError("line " + std::to_string(e.line) + ": key '" + key +
                    "' expects true/false, got '" + e.value + "'");
}

std::vector<double> parse_vec(const RawConfig::Entry& e, const std::string& key) {
  std::vector<double> out;
  std::stringstream ss(e.value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    double v = 0.0;
    const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
    if (res.ec != std::errc{} || res.ptr != item.data() + item.size())
      throw ConfigError("line " + std::to_string(e.line) + ": key '" + key +
                        "' expects comma-separated numbers");
    out.push_back(v);
  }
  if (out.empty())
    throw ConfigError("line " + std::to_string(e.line) + ": key '" + key + "' is empty");
  return out;
}

std::vector<std::string> parse_list(const RawConfig::Entry& e) {
  std::vector<std::string> out;
  std::stringstream ss(e.value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

RawConfig parse_config_text(const std::string& text, const std::string& path) {
  RawConfig raw;
  raw.path = path;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(path + ":" + std::to_string(lineno) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw ConfigError(path + ":" + std::to_string(lineno) + ": empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
    if (section.empty())
      throw ConfigError(path + ":" + std::to_string(lineno) + ": key outside any section");
    const std::string full = section + "." + key;
    if (raw.kv.count(full))
      throw ConfigError(path + ":" + std::to_string(lineno) + ": duplicate key '" + full + "'");
    raw.kv[full] = RawConfig::Entry{value, lineno};
  }
  return raw;
}

RawConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

namespace {

struct KeySpec {
  const char* key;
  bool required;
};

/// Allowed keys per command.  Anything else is rejected with its line number.
std::map<std::string, std::vector<KeySpec>> schema_for(const std::string& command) {
  std::map<std::string, std::vector<KeySpec>> s;
  s["system"] = {{"family", true},   {"n", false},      {"potential", false},
                 {"potential_param", false}, {"metric", false}, {"topology", false},
                 {"period", false}};
  s["output"] = {{"dir", false}};
  if (command == "curvature") {
    s["run"] = {{"seed", true},       {"energy", true},    {"sample_count", true},
                {"stencil_h", false}, {"richardson_tol", false},
                {"box_min", false},   {"box_max", false}};
  } else if (command == "lyapunov") {
    s["run"] = {{"seed", true},   {"energy", true}, {"sample_count", true},
                {"T", true},      {"dt", true},     {"renorm_interval", true},
                {"box_min", false}, {"box_max", false}};
  } else if (command == "bound") {
    s["run"] = {{"seed", true},       {"energy", true},    {"sample_count", true},
                {"T", true},          {"dt", true},        {"renorm_interval", true},
                {"stencil_h", false}, {"richardson_tol", false},
                {"with_rprime", false}, {"exclusion_cap", false},
                {"box_min", false},   {"box_max", false}};
  } else if (command == "verify") {
    s["run"] = {{"seed", true}, {"suite", true}, {"inject_nonsymplectic", false}};
  } else {
    throw ConfigError("unknown command '" + command + "'");
  }
  return s;
}

}  // namespace

ExperimentConfig load_config(const RawConfig& raw, const std::string& command) {
  const auto schema = schema_for(command);

  for (const auto& [full, entry] : raw.kv) {
    const auto dot = full.find('.');
    const std::string section = full.substr(0, dot);
    const std::string key = full.substr(dot + 1);
    const auto sit = schema.find(section);
    if (sit == schema.end())
      throw ConfigError(raw.path + ":" + std::to_string(entry.line) +
                        ": unknown section '" + section + "'");
    const bool known = std::any_of(sit->second.begin(), sit->second.end(),
                                   [&](const KeySpec& k) { return key == k.key; });
    if (!known)
      throw ConfigError(raw.path + ":" + std::to_string(entry.line) + ": unknown key '" +
                        full + "' for command '" + command + "'");
  }
  for (const auto& [section, keys] : schema)
    for (const auto& k : keys)
      if (k.required && !raw.kv.count(section + "." + std::string(k.key)))
        throw ConfigError(raw.path + ": missing required key '" + section + "." + k.key +
                          "' for command '" + command + "'");

  ExperimentConfig cfg;
  cfg.command = command;
  auto get = [&](const std::string& full) -> const RawConfig::Entry* {
    const auto it = raw.kv.find(full);
    return it == raw.kv.end() ? nullptr : &it->second;
  };

  cfg.family = trim(get("system.family")->value);
  if (const auto* e = get("system.n")) cfg.n = static_cast<int>(parse_int(*e, "system.n"));
  if (const auto* e = get("system.potential")) cfg.potential = trim(e->value);
  if (const auto* e = get("system.potential_param"))
    cfg.potential_param = parse_double(*e, "system.potential_param");
  if (const auto* e = get("system.metric")) cfg.metric = trim(e->value);
  if (const auto* e = get("system.topology")) cfg.topology = trim(e->value);
  if (const auto* e = get("system.period")) cfg.period = parse_double(*e, "system.period");

  if (const auto* e = get("run.seed")) {
    const long long s = parse_int(*e, "run.seed");
    if (s < 0) throw ConfigError("run.seed must be nonnegative");
    cfg.seed = static_cast<std::uint64_t>(s);
  }
  if (const auto* e = get("run.energy")) cfg.energy = parse_double(*e, "run.energy");
  if (const auto* e = get("run.sample_count"))
    cfg.sample_count = static_cast<int>(parse_int(*e, "run.sample_count"));
  if (const auto* e = get("run.T")) cfg.T = parse_double(*e, "run.T");
  if (const auto* e = get("run.dt")) cfg.dt = parse_double(*e, "run.dt");
  if (const auto* e = get("run.renorm_interval"))
    cfg.renorm_interval = parse_double(*e, "run.renorm_interval");
  if (const auto* e = get("run.stencil_h")) cfg.stencil_h = parse_double(*e, "run.stencil_h");
  if (const auto* e = get("run.richardson_tol"))
    cfg.richardson_tol = parse_double(*e, "run.richardson_tol");
  if (const auto* e = get("run.exclusion_cap"))
    cfg.exclusion_cap = parse_double(*e, "run.exclusion_cap");
  if (const auto* e = get("run.with_rprime")) cfg.with_rprime = parse_bool(*e, "run.with_rprime");
  if (const auto* e = get("run.box_min")) cfg.box_min = parse_vec(*e, "run.box_min");
  if (const auto* e = get("run.box_max")) cfg.box_max = parse_vec(*e, "run.box_max");
  if (const auto* e = get("run.suite")) cfg.suite = parse_list(*e);
  if (const auto* e = get("run.inject_nonsymplectic"))
    cfg.inject_nonsymplectic = parse_bool(*e, "run.inject_nonsymplectic");
  if (const auto* e = get("output.dir")) cfg.out_dir = trim(e->value);

  // Cross-field validation.
  if (cfg.family == "mechanical") {
    if (cfg.n < 1) throw ConfigError("mechanical systems need system.n >= 1");
  } else if (cfg.family == "geodesic2d" || cfg.family == "mechanical_on_metric") {
    if (cfg.n == 0) cfg.n = 2;
    if (cfg.n != 2) throw ConfigError(cfg.family + " systems are two-dimensional (n = 2)");
  } else {
    throw ConfigError("unknown system.family '" + cfg.family + "'");
  }
  if (cfg.potential != "zero" && cfg.potential != "harmonic" && cfg.potential != "cosine")
    throw ConfigError("unknown system.potential '" + cfg.potential + "'");
  if (cfg.metric != "euclidean" && cfg.metric != "hyperbolic" && cfg.metric != "sphere")
    throw ConfigError("unknown system.metric '" + cfg.metric + "'");
  if (cfg.topology != "unbounded" && cfg.topology != "torus")
    throw ConfigError("unknown system.topology '" + cfg.topology + "'");
  if (cfg.topology == "torus" && !(cfg.period > 0.0))
    throw ConfigError("torus topology needs a positive system.period");
  if (cfg.potential == "cosine" && cfg.topology != "torus")
    throw ConfigError("cosine potential needs torus topology");
  if (command == "lyapunov" || command == "bound") {
    if (!(cfg.dt > 0.0)) throw ConfigError("run.dt must be positive");
    if (!(cfg.T > 0.0)) throw ConfigError("run.T must be positive");
    if (!(cfg.renorm_interval > 0.0)) throw ConfigError("run.renorm_interval must be positive");
    if (cfg.T < cfg.renorm_interval)
      throw ConfigError("run.T below run.renorm_interval");
  }
  if (!(cfg.stencil_h > 0.0) || !(cfg.richardson_tol > 0.0) || !(cfg.exclusion_cap >= 0.0))
    throw ConfigError("tolerances must be positive");
  if (command != "verify" && cfg.sample_count <= 0)
    throw ConfigError("run.sample_count must be positive");
  if (command == "verify" && cfg.suite.empty())
    throw ConfigError("run.suite must select at least one property");
  return cfg;
}

std::shared_ptr<const systems::HamiltonianSystem> build_system(const ExperimentConfig& cfg) {
  using namespace systems;
  Topology topo = cfg.topology == "torus" ? Topology::torus(cfg.n, cfg.period)
                                          : Topology::unbounded(cfg.n);
  auto make_potential = [&]() -> Potential {
    if (cfg.potential == "zero") return Potential::zero(cfg.n);
    if (cfg.potential == "harmonic") {
      const double k = cfg.potential_param;
      const int n = cfg.n;
      return Potential{
          [k](const Vec& q) { return 0.5 * k * q.squaredNorm(); },
          [k](const Vec& q) { return Vec(k * q); },
          [k, n](const Vec&) { return Mat(k * Mat::Identity(n, n)); },
      };
    }
    // cosine: a * sum_i cos(2 pi q_i / L)
    const double a = cfg.potential_param;
    const double w = 2.0 * 3.14159265358979323846 / cfg.period;
    const int n = cfg.n;
    return Potential{
        [a, w](const Vec& q) {
          double s = 0.0;
          for (int i = 0; i < q.size(); ++i) s += std::cos(w * q[i]);
          return a * s;
        },
        [a, w, n](const Vec& q) {
          Vec g(n);
          for (int i = 0; i < n; ++i) g[i] = -a * w * std::sin(w * q[i]);
          return g;
        },
        [a, w, n](const Vec& q) {
          Mat h = Mat::Zero(n, n);
          for (int i = 0; i < n; ++i) h(i, i) = -a * w * w * std::cos(w * q[i]);
          return h;
        },
    };
  };
  auto make_metric = [&]() -> Metric2D {
    if (cfg.metric == "euclidean") return Metric2D::euclidean();
    if (cfg.metric == "hyperbolic") return Metric2D::hyperbolic_half_plane();
    return Metric2D::sphere_chart();
  };

  if (cfg.family == "mechanical")
    return std::make_shared<HamiltonianSystem>(mechanical(cfg.n, make_potential(), topo));
  if (cfg.family == "geodesic2d")
    return std::make_shared<HamiltonianSystem>(geodesic2d(make_metric(), topo));
  return std::make_shared<HamiltonianSystem>(
      mechanical_on_metric(make_metric(), make_potential(), topo));
}

namespace {

json config_json(const ExperimentConfig& cfg) {
  json j;
  j["command"] = cfg.command;
  j["system"] = {{"family", cfg.family},     {"n", cfg.n},
                 {"potential", cfg.potential}, {"potential_param", cfg.potential_param},
                 {"metric", cfg.metric},      {"topology", cfg.topology},
                 {"period", cfg.period}};
  j["run"] = {{"energy", cfg.energy},
              {"seed", cfg.seed},
              {"sample_count", cfg.sample_count},
              {"T", cfg.T},
              {"dt", cfg.dt},
              {"renorm_interval", cfg.renorm_interval},
              {"stencil_h", cfg.stencil_h},
              {"richardson_tol", cfg.richardson_tol},
              {"exclusion_cap", cfg.exclusion_cap},
              {"with_rprime", cfg.with_rprime},
              {"workers", cfg.workers},
              {"bit_repro", cfg.bit_repro}};
  j["output"] = {{"dir", cfg.out_dir}};
  return j;
}

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json report_envelope(const ExperimentConfig& cfg) {
  json j;
  j["command"] = cfg.command;
  j["library_version"] = kVersion;
  j["config"] = config_json(cfg);
  j["results"] = json::object();
  j["meta"] = {{"timestamp", timestamp_utc()}};
  return j;
}

void write_file(const std::string& dir, const std::string& name, const std::string& content,
                CommandResult& result) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const std::string path = (fs::path(dir) / name).string();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw NumericalError("cannot write " + path);
  out << content;
  result.files.push_back(path);
}

struct CsvWriter {
  std::ostringstream out;
  explicit CsvWriter(const std::vector<std::string>& header) {
    for (size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << "\n";
  }
  void row(const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << "\n";
  }
  std::string str() const { return out.str(); }
};

systems::SamplerOptions sampler_options(const ExperimentConfig& cfg) {
  systems::SamplerOptions opts;
  if (!cfg.box_min.empty()) {
    opts.q_min = Eigen::Map<const Vec>(cfg.box_min.data(), cfg.box_min.size());
    opts.q_max = Eigen::Map<const Vec>(cfg.box_max.data(), cfg.box_max.size());
  }
  return opts;
}

flow::IntegratorConfig integrator_for(const systems::HamiltonianSystem& sys, double dt) {
  flow::IntegratorConfig icfg;
  icfg.scheme =
      sys.separable() ? flow::Scheme::stormer_verlet : flow::Scheme::implicit_midpoint;
  icfg.dt = dt;
  return icfg;
}

jacobi::CurvatureConfig curvature_config(const ExperimentConfig& cfg) {
  jacobi::CurvatureConfig c;
  c.stencil_h = cfg.stencil_h;
  c.richardson_tol = cfg.richardson_tol;
  return c;
}

/// Relative eigenvalue gap between the pipeline operator and the family's
/// closed form; NaN when no closed form applies.
double closed_form_delta(const systems::HamiltonianSystem& sys, const systems::PhasePoint& z,
                         const jacobi::CurvatureOperator& rc) {
  Vec oracle;
  if (sys.family == systems::FamilyTag::mechanical) {
    const auto [r, rhat] = jacobi::mechanical_closed_form(sys, z);
    Eigen::SelfAdjointEigenSolver<Mat> es(jacobi::compress_to_reduced_fiber(rhat, z.p));
    oracle = es.eigenvalues();
  } else if (sys.family == systems::FamilyTag::geodesic2d) {
    oracle = jacobi::geodesic_closed_form(*sys.metric, z).eigvals;
  } else if (sys.family == systems::FamilyTag::mechanical_on_metric) {
    oracle =
        jacobi::mechanical_on_metric_closed_form(*sys.metric, *sys.potential, z).eigvals;
  } else {
    return std::numeric_limits<double>::quiet_NaN();
  }
  const double scale = std::max(1.0, oracle.cwiseAbs().maxCoeff());
  return (rc.eigvals - oracle).cwiseAbs().maxCoeff() / scale;
}

}  // namespace

CommandResult cmd_curvature(const ExperimentConfig& cfg) {
  CommandResult result;
  auto sys = build_system(cfg);
  const auto level = systems::make_level_set(sys, cfg.energy);
  const auto samples =
      systems::liouville_sample(level, cfg.sample_count, cfg.seed, sampler_options(cfg));
  const auto ccfg = curvature_config(cfg);
  const int k = sys->n - 1;

  struct Row {
    bool ok = false;
    Vec eigs;
    double asym = 0.0, delta = 0.0, h = 0.0, rich = 0.0;
    std::string err;
  };
  std::vector<Row> rows(samples.size());
  parallel_for(static_cast<int>(samples.size()), cfg.workers, [&](int i) {
    try {
      const auto rc = jacobi::reduced_curvature(*sys, samples[i], ccfg);
      rows[i] = {true, rc.eigvals, rc.asym_defect, closed_form_delta(*sys, samples[i], rc),
                 rc.stencil_h, rc.richardson_defect, ""};
    } catch (const Error& e) {
      rows[i].err = e.what();
    }
  });

  std::vector<std::string> header = {"index"};
  for (int j = 0; j < k; ++j) header.push_back("eig_" + std::to_string(j + 1));
  header.insert(header.end(),
                {"asym_defect", "closed_form_delta", "stencil_h", "richardson_defect",
                 "status"});
  CsvWriter csv(header);
  int failed = 0;
  double max_delta = 0.0, max_asym = 0.0;
  for (size_t i = 0; i < rows.size(); ++i) {
    const Row& r = rows[i];
    std::vector<std::string> cells = {std::to_string(i)};
    for (int j = 0; j < k; ++j) cells.push_back(r.ok ? fmt(r.eigs(j)) : "nan");
    cells.push_back(fmt(r.asym));
    cells.push_back(fmt(r.delta));
    cells.push_back(fmt(r.h));
    cells.push_back(fmt(r.rich));
    cells.push_back(r.ok ? "ok" : "failed");
    csv.row(cells);
    if (!r.ok) {
      ++failed;
      continue;
    }
    if (std::isfinite(r.delta)) max_delta = std::max(max_delta, r.delta);
    max_asym = std::max(max_asym, r.asym);
  }

  json rep = report_envelope(cfg);
  rep["results"] = {{"samples", static_cast<int>(samples.size())},
                    {"failed", failed},
                    {"max_closed_form_delta", max_delta},
                    {"max_asym_defect", max_asym}};
  result.report_json = rep.dump(2) + "\n";
  write_file(cfg.out_dir, "report.json", result.report_json, result);
  write_file(cfg.out_dir, "samples.csv", csv.str(), result);
  result.summary = "curvature: " + std::to_string(samples.size() - failed) + "/" +
                   std::to_string(samples.size()) +
                   " samples, max closed-form delta " + fmt(max_delta);
  if (failed == static_cast<int>(samples.size())) result.exit_code = kNumericalFailure;
  return result;
}

CommandResult cmd_lyapunov(const ExperimentConfig& cfg) {
  CommandResult result;
  auto sys = build_system(cfg);
  const auto level = systems::make_level_set(sys, cfg.energy);
  const auto samples =
      systems::liouville_sample(level, cfg.sample_count, cfg.seed, sampler_options(cfg));
  const auto icfg = integrator_for(*sys, cfg.dt);
  const int k = 2 * sys->n - 2;

  std::vector<entropy::LyapunovSpectrum> specs(samples.size());
  std::vector<std::string> errs(samples.size());
  parallel_for(static_cast<int>(samples.size()), cfg.workers, [&](int i) {
    try {
      specs[i] = entropy::lyapunov_spectrum(*sys, samples[i], cfg.T, cfg.renorm_interval, icfg);
    } catch (const Error& e) {
      errs[i] = e.what();
    }
  });

  std::vector<std::string> header = {"index"};
  for (int j = 0; j < k; ++j) header.push_back("lambda_" + std::to_string(j + 1));
  header.insert(header.end(), {"chi", "pairing_defect", "status"});
  CsvWriter csv(header);
  std::vector<double> chis;
  double max_pairing = 0.0;
  int failed = 0;
  for (size_t i = 0; i < specs.size(); ++i) {
    std::vector<std::string> cells = {std::to_string(i)};
    const bool ok = errs[i].empty();
    for (int j = 0; j < k; ++j)
      cells.push_back(ok ? fmt(specs[i].exponents[j]) : "nan");
    cells.push_back(ok ? fmt(specs[i].chi) : "nan");
    cells.push_back(ok ? fmt(specs[i].pairing_defect) : "nan");
    cells.push_back(ok ? "ok" : "failed");
    csv.row(cells);
    if (!ok) {
      ++failed;
      continue;
    }
    chis.push_back(specs[i].chi);
    max_pairing = std::max(max_pairing, specs[i].pairing_defect);
  }

  CsvWriter conv([&] {
    std::vector<std::string> h = {"time"};
    for (int j = 0; j < k; ++j) h.push_back("lambda_" + std::to_string(j + 1));
    return h;
  }());
  if (!specs.empty() && errs[0].empty())
    for (const auto& [t, est] : specs[0].convergence_history) {
      std::vector<std::string> cells = {fmt(t)};
      for (double v : est) cells.push_back(fmt(v));
      conv.row(cells);
    }

  double chi_mean = 0.0, chi_se = 0.0;
  if (!chis.empty()) {
    chi_mean = pairwise_sum(chis.data(), static_cast<int>(chis.size())) / chis.size();
    if (chis.size() > 1) {
      std::vector<double> d2(chis.size());
      for (size_t i = 0; i < chis.size(); ++i) d2[i] = (chis[i] - chi_mean) * (chis[i] - chi_mean);
      chi_se = std::sqrt(pairwise_sum(d2.data(), static_cast<int>(d2.size())) /
                         (chis.size() - 1) / chis.size());
    }
  }

  json rep = report_envelope(cfg);
  rep["results"] = {{"samples", static_cast<int>(samples.size())},
                    {"failed", failed},
                    {"chi_mean", chi_mean},
                    {"chi_std_error", chi_se},
                    {"max_pairing_defect", max_pairing}};
  result.report_json = rep.dump(2) + "\n";
  write_file(cfg.out_dir, "report.json", result.report_json, result);
  write_file(cfg.out_dir, "samples.csv", csv.str(), result);
  write_file(cfg.out_dir, "convergence.csv", conv.str(), result);
  result.summary = "lyapunov: chi = " + fmt(chi_mean) + " +- " + fmt(chi_se) +
                   ", max pairing defect " + fmt(max_pairing);
  if (failed == static_cast<int>(samples.size())) result.exit_code = kNumericalFailure;
  return result;
}

CommandResult cmd_bound(const ExperimentConfig& cfg) {
  CommandResult result;
  auto sys = build_system(cfg);
  const auto level = systems::make_level_set(sys, cfg.energy);

  entropy::BatchConfig bc;
  bc.workers = cfg.workers;
  bc.bit_repro = cfg.bit_repro;
  bc.exclusion_cap = cfg.exclusion_cap;
  bc.lyapunov_T = cfg.T;
  bc.renorm_interval = cfg.renorm_interval;
  bc.curvature = curvature_config(cfg);
  bc.integrator = integrator_for(*sys, cfg.dt);
  bc.sampler = sampler_options(cfg);
  bc.unstable.integrator = bc.integrator;
  bc.unstable.curvature = bc.curvature;

  std::vector<entropy::SampleOutcome> rows;
  const auto rep =
      entropy::entropy_report(level, cfg.sample_count, cfg.seed, bc, cfg.with_rprime, &rows);

  CsvWriter csv({"index", "status", "bound_integrand", "chi", "rprime", "symmetric_jacobi",
                 "grad_norm"});
  for (const auto& r : rows)
    csv.row({std::to_string(r.index), r.status, fmt(r.bound_integrand), fmt(r.chi),
             fmt(r.rprime), r.symmetric_jacobi ? "true" : "false", fmt(r.grad_norm)});

  json out = report_envelope(cfg);
  out["results"] = {
      {"bound_estimate", {{"value", rep.bound.value}, {"std_error", rep.bound.std_error}}},
      {"pesin_estimate", {{"value", rep.pesin.value}, {"std_error", rep.pesin.std_error}}},
      {"rprime_estimate",
       {{"value", rep.rprime.value}, {"std_error", rep.rprime.std_error}}},
      {"equality_gap", rep.equality_gap},
      {"gap_sigmas", rep.gap_sigmas},
      {"sample_count", rep.sample_count},
      {"excluded", rep.excluded},
      {"violations", rep.violations},
      {"blowups", rep.blowups},
      {"symmetric_jacobi_count", rep.symmetric_jacobi_count},
      {"min_grad_norm", rep.min_grad_norm}};
  result.report_json = out.dump(2) + "\n";
  write_file(cfg.out_dir, "report.json", result.report_json, result);
  write_file(cfg.out_dir, "samples.csv", csv.str(), result);
  result.summary = "bound: " + fmt(rep.bound.value) + " +- " + fmt(rep.bound.std_error) +
                   ", pesin: " + fmt(rep.pesin.value) + " +- " + fmt(rep.pesin.std_error) +
                   ", gap " + fmt(rep.equality_gap) + " (" + fmt(rep.gap_sigmas) + " sigma)";
  return result;
}

// ------------------------------------------------------------------ verify

namespace {

struct PropertyResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

using PropertyFn = std::function<PropertyResult(const ExperimentConfig&)>;

PropertyResult prop_convention(const ExperimentConfig&) {
  using namespace systems;
  auto sys = mechanical(2, Potential::zero(2), Topology::unbounded(2));
  PhasePoint z{Vec::Ones(2) * 2.0, Vec::Zero(2)};
  const Vec vf = hamiltonian_vf(sys, z);
  const double err = (vf.head(2).norm()) + (vf.tail(2) - z.p).norm();
  return {"convention", err < 1e-14, "vf of |p|^2/2 is (0, p): residual " + fmt(err)};
}

PropertyResult prop_symplecticity(const ExperimentConfig& cfg) {
  using namespace systems;
  // pendulum, Stormer-Verlet, T = 100
  const double pi = 3.14159265358979323846;
  ExperimentConfig pc;
  pc.family = "mechanical";
  pc.n = 1;
  pc.potential = "cosine";
  pc.potential_param = -1.0;
  pc.topology = "torus";
  pc.period = 2 * pi;
  auto sys = build_system(pc);
  flow::IntegratorConfig icfg = integrator_for(*sys, 1e-3);
  PhasePoint z{Vec::Ones(1) * 0.7, Vec::Ones(1) * 0.3};
  Mat pair(2, 2);
  pair << 1.0, 0.2, -0.3, 1.1;
  const double sigma0 = pair.col(0).dot(Vec((Mat(2, 2) << 0, 1, -1, 0).finished() * pair.col(1)));
  Mat f = pair;
  PhasePoint cur = z;
  const long steps = 100000;
  for (long i = 0; i < steps; ++i) {
    if (cfg.inject_nonsymplectic) {
      // Euler variational update: deliberately order-1 and non-symplectic.
      const Mat h = sys->hess_h(cur);
      Mat dvf(2, 2);
      dvf.row(0) = -h.row(1);
      dvf.row(1) = h.row(0);
      f = (Mat::Identity(2, 2) + icfg.dt * dvf) * f;
      cur = flow::step(*sys, cur, icfg);
    } else {
      const auto s = flow::step_with_tangent(*sys, cur, icfg);
      f = s.dstep * f;
      cur = s.z;
    }
  }
  const double sigma1 = f.col(0).dot(Vec((Mat(2, 2) << 0, 1, -1, 0).finished() * f.col(1)));
  const double drift = std::abs(sigma1 - sigma0);
  return {"symplecticity", drift <= 1e-6,
          "pendulum T=100 sigma drift " + fmt(drift) + " (tol 1e-6)"};
}

PropertyResult prop_energy_drift(const ExperimentConfig&) {
  const double pi = 3.14159265358979323846;
  ExperimentConfig pc;
  pc.family = "mechanical";
  pc.n = 1;
  pc.potential = "cosine";
  pc.potential_param = -1.0;
  pc.topology = "torus";
  pc.period = 2 * pi;
  auto sys = build_system(pc);
  flow::IntegratorConfig icfg = integrator_for(*sys, 1e-3);
  systems::PhasePoint z{Vec::Ones(1) * 0.7, Vec::Ones(1) * 0.3};
  const auto traj = flow::flow(*sys, z, 100.0, icfg);
  const double rel = traj.max_energy_drift / std::abs(sys->eval_h(z));
  return {"energy_drift", rel <= 1e-6, "pendulum T=100 relative drift " + fmt(rel)};
}

PropertyResult prop_lyapunov_pairing(const ExperimentConfig&) {
  ExperimentConfig pc;
  pc.family = "geodesic2d";
  pc.metric = "hyperbolic";
  pc.n = 2;
  auto sys = build_system(pc);
  systems::PhasePoint z{Vec(2), Vec(2)};
  z.p << 0.6, 0.8;
  z.q << 0.1, 1.0;
  const auto icfg = integrator_for(*sys, 1e-3);
  const auto spec = entropy::lyapunov_spectrum(*sys, z, 200.0, 0.5, icfg);
  return {"lyapunov_pairing", spec.pairing_defect <= 1e-3,
          "hyperbolic T=200 pairing defect " + fmt(spec.pairing_defect)};
}

PropertyResult prop_riccati_tanh(const ExperimentConfig&) {
  auto rcb = [](double) { return Mat(Mat::Constant(1, 1, -1.0)); };
  const auto st = entropy::riccati_integrate(rcb, Mat::Zero(1, 1), 0.0, 5.0);
  const double err = std::abs(st.V(0, 0) - std::tanh(5.0));
  return {"riccati_tanh", err <= 1e-6, "V(5) vs tanh(5): error " + fmt(err)};
}

PropertyResult prop_riccati_blowup(const ExperimentConfig&) {
  auto rcb = [](double) { return Mat(Mat::Constant(1, 1, 1.0)); };
  const auto st = entropy::riccati_integrate(rcb, Mat::Zero(1, 1), 0.0, 3.0);
  const bool ok = st.blowup && st.blowup_time > 1.5 && st.blowup_time < 1.6;
  return {"riccati_blowup", ok,
          st.blowup ? "blowup at t = " + fmt(st.blowup_time) : "no blowup detected"};
}

PropertyResult prop_trace_inequality(const ExperimentConfig& cfg) {
  Rng rng(cfg.seed + 17);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int d = 1 + static_cast<int>(rng.raw() % 6);
    auto rnd_psd = [&](double eps) {
      Mat a(d, d);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) a(i, j) = rng.normal();
      return Mat(a.transpose() * a + eps * Mat::Identity(d, d));
    };
    const Mat m = rnd_psd(0.0), n = rnd_psd(0.0), u = rnd_psd(1e-3);
    const auto r = entropy::trace_inequality(m, n, u);
    worst = std::max(worst, r.rhs - r.lhs);
  }
  return {"trace_inequality", worst <= 1e-10,
          "worst rhs - lhs over 200 triples: " + fmt(worst)};
}

PropertyResult prop_oracle_mechanical(const ExperimentConfig& cfg) {
  using namespace systems;
  Rng rng(cfg.seed + 23);
  jacobi::CurvatureConfig ccfg;
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    Mat a(2, 2);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) a(i, j) = rng.normal();
    const Mat A = symmetrize(a);
    const Vec b = rng.normal_vec(2);
    Potential pot{
        [A, b](const Vec& q) { return 0.5 * q.dot(A * q) + b.dot(q); },
        [A, b](const Vec& q) { return Vec(A * q + b); },
        [A](const Vec&) { return A; },
    };
    auto sys = mechanical(2, pot, Topology::unbounded(2));
    PhasePoint z{rng.normal_vec(2), rng.normal_vec(2)};
    if (z.p.norm() < 0.5) z.p += Vec::Ones(2);
    const auto rc = jacobi::reduced_curvature(sys, z, ccfg);
    const auto [r, rhat] = jacobi::mechanical_closed_form(sys, z);
    const Mat oracle = jacobi::compress_to_reduced_fiber(rhat, z.p);
    const double delta = std::abs(rc.eigvals(0) - oracle(0, 0)) /
                         std::max(1.0, std::abs(oracle(0, 0)));
    worst = std::max(worst, delta);
  }
  return {"oracle_mechanical", worst <= 1e-4,
          "worst relative delta over 5 seeded potentials: " + fmt(worst)};
}

PropertyResult prop_oracle_geodesic(const ExperimentConfig&) {
  using namespace systems;
  jacobi::CurvatureConfig ccfg;
  auto hyp = geodesic2d(Metric2D::hyperbolic_half_plane());
  PhasePoint zh{Vec(2), Vec(2)};
  zh.p << 0.6, 0.8;
  zh.q << 0.3, 1.0;
  const double vh = jacobi::reduced_curvature(hyp, zh, ccfg).eigvals(0);
  auto sph = geodesic2d(Metric2D::sphere_chart());
  PhasePoint zs{Vec(2), Vec(2)};
  zs.p << 0.6, 0.8 * std::sin(1.1);
  zs.q << 1.1, 0.2;
  const double vs = jacobi::reduced_curvature(sph, zs, ccfg).eigvals(0);
  const double err = std::max(std::abs(vh + 1.0), std::abs(vs - 1.0));
  return {"oracle_geodesic",
          err <= 1e-4, "hyperbolic " + fmt(vh) + ", sphere " + fmt(vs)};
}

PropertyResult prop_sampler_invariance(const ExperimentConfig& cfg) {
  using namespace systems;
  const double pi = 3.14159265358979323846;
  auto sys = std::make_shared<HamiltonianSystem>(
      mechanical(2, Potential::zero(2), Topology::torus(2, 2 * pi)));
  const auto level = make_level_set(sys, 0.5);
  const auto pts = liouville_sample(level, 2000, cfg.seed + 5, {});
  const auto icfg = integrator_for(*sys, 0.05);
  std::vector<std::function<double(const PhasePoint&)>> obs = {
      [](const PhasePoint& z) { return std::cos(z.q[0]); },
      [](const PhasePoint& z) { return std::sin(z.q[1]) * z.p[0] * z.p[0]; },
      [](const PhasePoint& z) { return z.p[0] * z.p[1]; },
      [](const PhasePoint& z) { return std::cos(z.q[0] + z.q[1]); },
  };
  double worst = 0.0;
  for (const auto& f : obs) {
    std::vector<double> diffs;
    for (const auto& z : pts) {
      const auto zt = flow::flow(*sys, z, 1.0, icfg).points.back();
      diffs.push_back(f(zt) - f(z));
    }
    const double mean = pairwise_sum(diffs.data(), static_cast<int>(diffs.size())) / diffs.size();
    double var = 0.0;
    for (double d : diffs) var += (d - mean) * (d - mean);
    var /= (diffs.size() - 1);
    const double se = std::sqrt(var / diffs.size());
    if (se > 0.0) worst = std::max(worst, std::abs(mean) / se);
  }
  return {"sampler_invariance", worst <= 4.0,
          "worst |mean shift| over observables: " + fmt(worst) + " sigma (tol 4)"};
}

const std::map<std::string, PropertyFn>& property_table() {
  static const std::map<std::string, PropertyFn> table = {
      {"convention", prop_convention},
      {"symplecticity", prop_symplecticity},
      {"energy_drift", prop_energy_drift},
      {"lyapunov_pairing", prop_lyapunov_pairing},
      {"riccati_tanh", prop_riccati_tanh},
      {"riccati_blowup", prop_riccati_blowup},
      {"trace_inequality", prop_trace_inequality},
      {"oracle_mechanical", prop_oracle_mechanical},
      {"oracle_geodesic", prop_oracle_geodesic},
      {"sampler_invariance", prop_sampler_invariance},
  };
  return table;
}

}  // namespace

CommandResult cmd_verify(const ExperimentConfig& cfg) {
  CommandResult result;
  std::vector<std::string> names;
  if (cfg.suite.size() == 1 && cfg.suite[0] == "default") {
    for (const auto& [name, fn] : property_table()) names.push_back(name);
  } else {
    names = cfg.suite;
    for (const auto& n : names)
      if (!property_table().count(n))
        throw ConfigError("unknown verify property '" + n + "'");
  }

  json rep = report_envelope(cfg);
  json props = json::array();
  bool all_pass = true;
  std::string lines;
  for (const auto& name : names) {
    const auto pr = property_table().at(name)(cfg);
    all_pass = all_pass && pr.pass;
    props.push_back({{"name", pr.name}, {"pass", pr.pass}, {"detail", pr.detail}});
    lines += std::string(pr.pass ? "[PASS] " : "[FAIL] ") + pr.name + ": " + pr.detail + "\n";
  }
  rep["results"] = {{"all_pass", all_pass}, {"properties", props}};
  result.report_json = rep.dump(2) + "\n";
  write_file(cfg.out_dir, "report.json", result.report_json, result);
  result.summary = lines + (all_pass ? "verify: all properties pass" : "verify: FAILURES");
  result.exit_code = all_pass ? kOk : kNumericalFailure;
  return result;
}

CommandResult run_command(const ExperimentConfig& cfg) {
  try {
    if (cfg.command == "curvature") return cmd_curvature(cfg);
    if (cfg.command == "lyapunov") return cmd_lyapunov(cfg);
    if (cfg.command == "bound") return cmd_bound(cfg);
    if (cfg.command == "verify") return cmd_verify(cfg);
    throw ConfigError("unknown command '" + cfg.command + "'");
  } catch (const ConfigError& e) {
    CommandResult r;
    r.exit_code = kConfigError;
    r.summary = std::string("config error: ") + e.what();
    return r;
  } catch (const HypothesisViolationError& e) {
    CommandResult r;
    r.exit_code = kHypothesisViolation;
    json rep = report_envelope(cfg);
    rep["results"] = {{"error", "hypothesis_violation"},
                      {"message", e.what()},
                      {"witness", e.witness}};
    r.report_json = rep.dump(2) + "\n";
    try {
      write_file(cfg.out_dir, "report.json", r.report_json, r);
    } catch (...) {
    }
    r.summary = std::string("hypothesis violation: ") + e.what();
    return r;
  } catch (const Error& e) {
    CommandResult r;
    r.exit_code = kNumericalFailure;
    json rep = report_envelope(cfg);
    rep["results"] = {{"error", "numerical_failure"}, {"message", e.what()}};
    r.report_json = rep.dump(2) + "\n";
    try {
      write_file(cfg.out_dir, "report.json", r.report_json, r);
    } catch (...) {
    }
    r.summary = std::string("numerical failure: ") + e.what();
    return r;
  }
}

std::string stable_report_view(const std::string& report_json) {
  json j = json::parse(report_json);
  j.erase("meta");
  return j.dump(2);
}

}  // namespace hamcurv::experiment
