// Command-line front end: optimize, sweep and check.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>
#include <spdlog/cfg/env.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "cranloc/cranloc.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof(buf), "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

/// Comma-separated finite numbers; empty when the list is empty or malformed.
std::vector<double> parse_capacity_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      return {};
    }
    if (tok.find_first_not_of(" \t", used) != std::string::npos || !std::isfinite(v)) return {};
    out.push_back(v);
  }
  return out;
}

struct Args {
  std::string scenario;
  std::string out;
  std::optional<double> capacity;
  std::string capacity_list;
  std::uint64_t seed = 1;
  std::size_t positions = 400;
  std::size_t fading_draws = 2000;
  int max_iters = 100;
  double delta_th = 1e-5;
};

/// Run record written next to every output, including failed runs.
class Manifest {
 public:
  Manifest(std::string command, const Args& a) : start_(std::chrono::steady_clock::now()) {
    doc_["command"] = std::move(command);
    doc_["tool_version"] = cranloc::kVersion;
    doc_["scenario_path"] = a.scenario;
    doc_["seed"] = a.seed;
    doc_["options"] = {{"max_iters", a.max_iters}, {"delta_th", a.delta_th}};
    doc_["status"] = "running";
  }

  json& doc() { return doc_; }
  void set_scenario_hash(const std::string& h) { doc_["scenario_sha256"] = h; }
  void fail(const std::string& why) {
    doc_["status"] = "failed";
    doc_["error"] = why;
  }
  void succeed() { doc_["status"] = "ok"; }

  void write(const std::string& out_dir) {
    if (out_dir.empty()) return;
    doc_["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    std::ofstream f(fs::path(out_dir) / "manifest.json");
    if (!f) {
      spdlog::error("cannot write manifest in {}", out_dir);
      return;
    }
    f << doc_.dump(2) << '\n';
  }

 private:
  json doc_;
  std::chrono::steady_clock::time_point start_;
};

cranloc::SolverOptions solver_options(const Args& a) {
  cranloc::SolverOptions o;
  o.max_outer_iterations = a.max_iters;
  o.delta_th = a.delta_th;
  return o;
}

/// Reads the scenario text; returns nullopt (after reporting) when the file is missing.
std::optional<std::string> read_scenario_text(const std::string& path) {
  std::error_code ec;
  if (path.empty() || !fs::is_regular_file(path, ec)) {
    std::cerr << "error: cannot read scenario file: " << path << '\n';
    return std::nullopt;
  }
  return cranloc::read_text_file(path);
}

bool open_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    std::cerr << "error: cannot create output directory: " << dir << '\n';
    return false;
  }
  return true;
}

void write_design(const fs::path& dir, const cranloc::QuantizerDesign& d, const std::string& prefix = "sq_ru") {
  fs::create_directories(dir);
  for (std::size_t j = 0; j < d.n_ru(); ++j) {
    char name[32];
    std::snprintf(name, sizeof(name), "%s%02zu.csv", prefix.c_str(), j + 1);
    std::ofstream f(dir / name);
    cranloc::write_spectrum_csv(f, d.sq[j], "sq_mw_per_hz");
  }
}

int cmd_optimize(const Args& a) {
  Manifest man("optimize", a);
  if (a.capacity) man.doc()["capacity_override"] = *a.capacity;
  const auto text = read_scenario_text(a.scenario);
  if (!text) {
    man.fail("cannot read scenario file: " + a.scenario);
    man.write(a.out);
    return kExitUsage;
  }
  man.set_scenario_hash(sha256_hex(*text));
  if (!open_out_dir(a.out)) return kExitUsage;
  try {
    cranloc::Scenario s = cranloc::load_scenario(*text);
    if (a.capacity) s = s.with_capacity(*a.capacity);
    spdlog::info("optimizing '{}' ({} RUs, {} circles, N_f = {})", s.name, s.n_ru(), s.n_circles(), s.grid_points);
    const cranloc::RobustSolution sol = cranloc::solve_robust(s, solver_options(a));
    if (!sol.state.converged) {
      spdlog::warn("DC loop hit the iteration cap ({}) before converging; returning the last iterate",
                   a.max_iters);
    }
    write_design(a.out, sol.design);
    std::ofstream trace(fs::path(a.out) / "solver_trace.csv");
    cranloc::write_trace_csv(trace, sol.state);
    man.doc()["solver"] = {{"iterations", sol.state.iteration},
                           {"converged", sol.state.converged},
                           {"objective_m2", sol.state.t},
                           {"initial_objective_m2", sol.state.history.front()},
                           {"newton_steps", sol.state.newton_steps},
                           {"initialization", "white baseline inflated by 1%"}};
    std::cout << "worst-case bound " << cranloc::format_number(sol.state.t) << " m^2 after "
              << sol.state.iteration << " DC iterations\n";
    man.succeed();
    man.write(a.out);
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    man.fail(e.what());
    man.write(a.out);
    return kExitFailure;
  }
}

int cmd_sweep(const Args& a) {
  Manifest man("sweep", a);
  man.doc()["capacities"] = a.capacity_list;
  man.doc()["positions"] = a.positions;
  man.doc()["fading_draws"] = a.fading_draws;
  const std::vector<double> capacities = parse_capacity_list(a.capacity_list);
  if (capacities.empty()) {
    std::cerr << "usage error: --capacities must be a nonempty comma-separated list of numbers\n";
    man.fail("empty or malformed capacity list");
    man.write(a.out);
    return kExitUsage;
  }
  const auto text = read_scenario_text(a.scenario);
  if (!text) {
    man.fail("cannot read scenario file: " + a.scenario);
    man.write(a.out);
    return kExitUsage;
  }
  const std::string hash = sha256_hex(*text);
  man.set_scenario_hash(hash);
  if (!open_out_dir(a.out)) return kExitUsage;
  try {
    const cranloc::Scenario s = cranloc::load_scenario(*text);
    cranloc::EvalConfig cfg;
    cfg.capacities = capacities;
    cfg.seed = a.seed;
    cfg.n_positions = a.positions;
    cfg.n_fading_draws = a.fading_draws;
    const cranloc::EvalReport rep = cranloc::sweep_capacity(s, cfg, solver_options(a), hash);

    std::ofstream csv(fs::path(a.out) / "sweep_report.csv");
    cranloc::write_report_csv(csv, rep);
    json rows = json::array();
    bool all_ok = true;
    for (const cranloc::SweepPoint& p : rep.points) {
      const fs::path dir = fs::path(a.out) / "designs" / ("c_" + cranloc::format_number(p.capacity));
      json row = {{"capacity", p.capacity}};
      if (p.proposed_design) write_design(dir, *p.proposed_design, "proposed_sq_ru");
      if (p.baseline_design) write_design(dir, *p.baseline_design, "baseline_sq_ru");
      if (p.solver_state) {
        std::ofstream trace(dir / "solver_trace.csv");
        cranloc::write_trace_csv(trace, *p.solver_state);
        row["iterations"] = p.solver_state->iteration;
        row["converged"] = p.solver_state->converged;
        row["objective_m2"] = p.solver_state->t;
      }
      if (p.proposed) row["proposed_rejected_draws"] = p.proposed->rejected;
      if (p.baseline) row["baseline_rejected_draws"] = p.baseline->rejected;
      if (!p.proposed_error.empty()) row["proposed_error"] = p.proposed_error;
      if (!p.baseline_error.empty()) row["baseline_error"] = p.baseline_error;
      if (!p.ok()) {
        all_ok = false;
        spdlog::error("capacity {}: proposed [{}] baseline [{}]", p.capacity, p.proposed_error, p.baseline_error);
      }
      rows.push_back(row);
    }
    man.doc()["points"] = rows;
    cranloc::write_report_csv(std::cout, rep);
    if (all_ok) {
      man.succeed();
    } else {
      man.fail("one or more capacity points failed");
    }
    man.write(a.out);
    return all_ok ? kExitOk : kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    man.fail(e.what());
    man.write(a.out);
    return kExitFailure;
  }
}

int cmd_check(const Args& a) {
  const auto text = read_scenario_text(a.scenario);
  if (!text) return kExitUsage;
  bool ok = true;
  auto report = [&](bool pass, const std::string& name, const std::string& detail) {
    std::cout << (pass ? "PASS " : "FAIL ") << name;
    if (!detail.empty()) std::cout << ": " << detail;
    std::cout << '\n';
    ok = ok && pass;
  };

  cranloc::Scenario s;
  try {
    s = cranloc::load_scenario(*text);
    report(true, "validation", std::to_string(s.n_ru()) + " RUs, " + std::to_string(s.n_circles()) + " circles");
  } catch (const cranloc::ParseError& e) {
    report(false, "parse", e.what());
    return kExitFailure;
  } catch (const cranloc::ValidationError& e) {
    report(false, "validation", e.what());
    return kExitFailure;
  }

  const cranloc::CoveringReport cov = cranloc::check_covering(s, 100000, a.seed);
  report(cov.covered(), "covering",
         std::to_string(cov.uncovered) + " of " + std::to_string(cov.samples) + " samples outside every circle");

  try {
    const cranloc::FrequencyGrid grid = s.grid();
    const cranloc::QuantizerDesign base = cranloc::baseline_white_design(s);
    const std::vector<double> kappa = cranloc::ranging_information(s, base, grid);
    for (std::size_t l = 0; l < s.n_circles(); ++l) {
      const cranloc::CircleGeometry cg = cranloc::derive_circle_geometry(s, l);
      const cranloc::SymMat2 q = cranloc::worst_case_q_matrix_from_information(cg, kappa);
      const bool pd = q.min_eigenvalue() > 0.0;
      report(pd, "relaxation circle " + std::to_string(l),
             pd ? "tr(Q^-1) = " + cranloc::format_number(q.inverse().trace()) + " m^2"
                : "Q is not positive definite with the white baseline");
    }
  } catch (const std::exception& e) {
    report(false, "relaxation", e.what());
  }
  return ok ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("cranloc");
  spdlog::set_default_logger(logger);
  spdlog::cfg::load_env_levels();  // SPDLOG_LEVEL=debug|info|warn|...

  CLI::App app{"Robust fronthaul quantization design for cloud-RAN localization"};
  app.require_subcommand(1);
  Args a;

  auto add_solver_flags = [&](CLI::App* sub) {
    sub->add_option("--max-iters", a.max_iters, "DC outer iteration cap")->check(CLI::PositiveNumber);
    sub->add_option("--delta-th", a.delta_th, "relative aggregate m-change stop threshold")
        ->check(CLI::PositiveNumber);
  };

  CLI::App* opt = app.add_subcommand("optimize", "optimize quantization-noise PSDs for one scenario");
  opt->add_option("--scenario", a.scenario, "scenario file")->required();
  opt->add_option("--capacity", a.capacity, "fronthaul capacity for every RU (bits/s/Hz)");
  opt->add_option("--out", a.out, "output directory")->required();
  opt->add_option("--seed", a.seed, "random seed (recorded in the manifest)");
  add_solver_flags(opt);

  CLI::App* sweep = app.add_subcommand("sweep", "capacity sweep of proposed vs white baseline");
  sweep->add_option("--scenario", a.scenario, "scenario file")->required();
  sweep->add_option("--capacities", a.capacity_list, "comma-separated capacities (bits/s/Hz)")->required();
  sweep->add_option("--seed", a.seed, "random seed");
  sweep->add_option("--out", a.out, "output directory")->required();
  sweep->add_option("--positions", a.positions, "number of sampled target positions")->check(CLI::PositiveNumber);
  sweep->add_option("--fading-draws", a.fading_draws, "fading draws per position")->check(CLI::Range(2, 100000000));
  add_solver_flags(sweep);

  CLI::App* check = app.add_subcommand("check", "validate a scenario and run pre-checks");
  check->add_option("--scenario", a.scenario, "scenario file")->required();
  check->add_option("--seed", a.seed, "seed of the covering Monte Carlo");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (*opt) return cmd_optimize(a);
  if (*sweep) return cmd_sweep(a);
  return cmd_check(a);
}
