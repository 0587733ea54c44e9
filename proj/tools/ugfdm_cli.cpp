// ugfdm command-line driver.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ugfdm/config.hpp"
#include "ugfdm/error.hpp"
#include "ugfdm/scenario.hpp"

namespace {

using namespace ugfdm;

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw io_error("cannot create output directory '" + dir + "': " + ec.message());
}

void print_report(const std::string& label, const SolverReport& rep) {
  std::cout << label << ": " << rep.steps.size() << " steps, " << rep.cumulative_newton << " newton iterations, "
            << rep.cuts << " cuts, " << rep.wall_seconds << " s\n";
}

int cmd_run(const std::string& cfg_path, const std::string& solver) {
  const ScenarioConfig cfg = load_config(cfg_path);
  validate(cfg);
  const std::string dir = output_directory(cfg);
  ensure_dir(dir);
  RunResult res = solver == "fdm" ? run_fdm_scenario(cfg) : run_gfdm(cfg);
  write_run_outputs(cfg, res, dir, solver);
  if (res.cloud) write_cloud_csv(dir + "/cloud.csv", *res.cloud);
  if (cfg.profile_y) {
    const double tol = cfg.cloud_type == "cartesian" ? 1e-6 : 0.5 * cfg.nominal_spacing();
    const auto prof = extract_profile(res.snapshots.back(), *cfg.profile_y, tol);
    std::ofstream os(dir + "/" + solver + "_profile.csv");
    if (!os) throw io_error("cannot write profile in '" + dir + "'");
    os << "x,p,sw\n" << std::setprecision(17);
    for (const auto& p : prof) os << p.x << ',' << p.p << ',' << p.sw << '\n';
  }
  print_report(solver, res.report);
  std::cout << "outputs written to " << dir << '\n';
  return 0;
}

int cmd_convergence(const std::string& cfg_path, std::vector<double> spacings, std::optional<double> factor) {
  const ScenarioConfig cfg = load_config(cfg_path);
  if (spacings.empty()) spacings = cfg.convergence_spacings;
  const std::string dir = output_directory(cfg);
  ensure_dir(dir);
  const std::string csv = dir + "/convergence.csv";
  const auto res = convergence_study(cfg, spacings, factor.value_or(cfg.convergence_radius_factor), csv,
                                     [](const std::string& s) { std::cerr << s << '\n'; });
  write_convergence_csv(std::cout, res);
  return 0;
}

int cmd_diagnose(const std::string& cfg_path, const std::string& nodes, const std::string& out) {
  const ScenarioConfig cfg = load_config(cfg_path);
  const auto rows = diagnose(cfg, nodes);
  if (out.empty()) {
    write_diagnose_csv(std::cout, rows);
  } else {
    std::ofstream os(out);
    if (!os) throw io_error("cannot open '" + out + "' for writing");
    write_diagnose_csv(os, rows);
  }
  return 0;
}

int cmd_compare(const std::string& a, const std::string& b, std::optional<double> y, double tol) {
  const Comparison c = compare(read_snapshot_csv(a), read_snapshot_csv(b), y, tol);
  write_comparison(std::cout, c);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Meshless GFDM two-phase reservoir simulator"};
  app.require_subcommand(1);

  std::string cfg_path, solver = "gfdm", nodes = "all", out, snap_a, snap_b;
  std::vector<double> spacings;
  std::optional<double> factor, profile_y;
  double tol = 1e-6;

  auto* run = app.add_subcommand("run", "run a scenario and write snapshots");
  run->add_option("config", cfg_path, "scenario config")->required();
  run->add_option("--solver", solver, "gfdm or fdm")->check(CLI::IsMember({"gfdm", "fdm"}));

  auto* conv = app.add_subcommand("convergence", "error-versus-spacing study against a fine reference");
  conv->add_option("config", cfg_path, "base scenario config")->required();
  conv->add_option("--spacings", spacings, "node spacings, descending");
  conv->add_option("--radius-factor", factor, "influence radius as a multiple of the spacing");

  auto* diag = app.add_subcommand("diagnose", "stencil quality per node");
  diag->add_option("config", cfg_path, "scenario config")->required();
  diag->add_option("--nodes", nodes, "all | interior | boundary | id list such as 3,7-9");
  diag->add_option("-o,--output", out, "CSV path (default stdout)");

  auto* cmp = app.add_subcommand("compare", "relative errors and profile differences between snapshots");
  cmp->add_option("a", snap_a, "snapshot CSV")->required();
  cmp->add_option("b", snap_b, "reference snapshot CSV")->required();
  cmp->add_option("--profile-y", profile_y, "also list differences along this line");
  cmp->add_option("--tol", tol, "line selection tolerance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*run) return cmd_run(cfg_path, solver);
    if (*conv) return cmd_convergence(cfg_path, spacings, factor);
    if (*diag) return cmd_diagnose(cfg_path, nodes, out);
    if (*cmp) return cmd_compare(snap_a, snap_b, profile_y, tol);
  } catch (const ugfdm::Error& e) {
    std::cerr << "error[" << ugfdm::category_name(e.category()) << "]: " << e.what() << '\n';
    return ugfdm::exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error[io]: " << e.what() << '\n';
    return 4;
  }
  return 0;
}
