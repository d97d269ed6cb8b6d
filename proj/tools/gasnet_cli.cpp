// gasnet command-line driver.
//
//   gasnet_cli simulate <scenario> [--out DIR] [--cells N] [--dt DT] [--scheme S]
//   gasnet_cli study epsilon|gamma|boundary <scenario> [--eps-list ...] [--gamma-offsets ...]
//              [--amplitudes ...] [--threads N] [--cells N] [--dt DT] [--out DIR]
//   gasnet_cli verify <scenario> [--seed S] [--samples N] [--out DIR]
//   gasnet_cli mms [--out DIR]
//
// Exit status: 0 success, 1 failed check, 2 bad input, 3 solver failure.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "gasnet/mms.hpp"
#include "gasnet/output.hpp"
#include "gasnet/scenario.hpp"
#include "gasnet/study.hpp"
#include "gasnet/verify.hpp"

using namespace gasnet;

namespace {

constexpr int kOk = 0, kCheckFailed = 1, kBadInput = 2, kSolverFailed = 3;

struct Common {
  std::string scenario;
  std::string out;
  std::optional<std::size_t> cells;
  std::optional<double> dt;
  std::optional<std::string> scheme;
  std::size_t threads = 0;
  std::uint64_t seed = 12345;
  std::size_t samples = 200;
  std::vector<double> eps_list, gamma_offsets, amplitudes;
};

std::filesystem::path out_dir(const Common& o, const Scenario& sc) {
  return o.out.empty() ? sc.output_dir : std::filesystem::path(o.out);
}

Manifest base_manifest(const std::string& command, const Common& o) {
  Manifest m;
  m.set("command", command);
  m.set("scenario_file", o.scenario);
  if (o.cells) m.set("override.cells", std::to_string(*o.cells));
  if (o.dt) m.set("override.dt", *o.dt);
  if (o.scheme) m.set("override.scheme", *o.scheme);
  return m;
}

Scenario load(const Common& o) {
  Scenario sc = load_scenario(o.scenario);
  if (o.cells) sc.cells = *o.cells;
  if (o.dt) sc.solver.dt = *o.dt;
  if (o.scheme) sc.solver.scheme = parse_scheme(*o.scheme);
  return sc;
}

void require_admissible_start(const Scenario& sc, const NetworkGrid& grid, const NetworkState& s) {
  if (!sc.bounds) return;
  auto rep = check_admissible(grid, s, *sc.bounds, sc.law);
  if (!rep.ok) {
    std::string msg = "initial state is not admissible:";
    for (const auto& v : rep.violations) msg += "\n  " + v;
    throw ConfigError(msg);
  }
}

int cmd_simulate(const Common& o) {
  Scenario sc = load(o);
  auto grid = scenario_grid(sc);
  auto init = scenario_initial(sc, grid);
  require_admissible_start(sc, grid, init);
  auto t0 = std::chrono::steady_clock::now();
  auto traj = run(grid, sc.law, init, sc.solver, sc.boundary);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  auto dir = out_dir(o, sc);
  Manifest m = base_manifest("simulate", o);
  m.merge(sc.resolved);
  m.set("result.complete", traj.complete ? "true" : "false");
  if (!traj.complete) m.set("result.failure", traj.failure);
  m.set("result.steps", std::to_string(traj.steps.size()));
  m.set("result.final_tau", traj.snapshots.back().tau);
  m.set("result.energy_initial", traj.energy.front());
  m.set("result.energy_final", traj.energy.back());
  auto chk = check_trajectory(traj);
  m.set("result.max_balance_residual", chk.max_balance);
  m.set("result.max_junction_mass", chk.max_junction_mass);
  m.set("result.warnings", std::to_string(traj.warnings.size()));
  m.set("result.seconds", secs);
  Manifest::write_text(dir / "trace.csv", trace_csv(grid, traj, sc.boundary));
  Manifest::write_text(dir / "snapshots.csv", snapshots_csv(grid, traj, sc.output_every));
  Manifest::write_text(dir / "final_state.csv", state_csv(grid, traj.snapshots.back()));
  m.write(dir / "manifest.txt");

  std::printf("%s: %zu steps to tau=%g, H %.12g -> %.12g, max balance residual %.3e\n", sc.name.c_str(),
              traj.steps.size(), traj.snapshots.back().tau, traj.energy.front(), traj.energy.back(), chk.max_balance);
  for (const auto& w : traj.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  std::printf("outputs in %s\n", dir.string().c_str());
  if (!traj.complete) {
    std::fprintf(stderr, "error: %s\n", traj.failure.c_str());
    return kSolverFailed;
  }
  return kOk;
}

int cmd_study(const std::string& kind, const Common& o) {
  Scenario sc = load(o);
  StudyOptions opt;
  opt.threads = o.threads ? o.threads : sc.study.threads;
  StudyResult r;
  if (kind == "epsilon") r = epsilon_limit_study(sc, o.eps_list.empty() ? sc.study.eps_list : o.eps_list, opt);
  else if (kind == "gamma") r = gamma_perturbation_study(sc, o.gamma_offsets.empty() ? sc.study.gamma_offsets : o.gamma_offsets, opt);
  else r = boundary_perturbation_study(sc, o.amplitudes.empty() ? sc.study.amplitudes : o.amplitudes, opt);

  auto dir = out_dir(o, sc) / ("study_" + kind);
  Manifest m = base_manifest("study " + kind, o);
  m.merge(sc.resolved);
  m.merge(r.settings, "study.");
  m.set("study.threads", std::to_string(opt.threads));
  std::string params;
  for (const auto& p : r.points) params += (params.empty() ? "" : ",") + format_double(p.parameter);
  m.set("study.parameters", params);
  m.set("result.slope", r.slope_defined ? format_double(r.fit.slope) : "undefined");
  m.set("result.discarded_largest", r.fit.discarded_largest ? "true" : "false");
  m.set("result.certificates", r.certificates_hold() ? "hold" : "fail");
  Manifest::write_text(dir / "study.csv", study_csv(r));
  m.write(dir / "manifest.txt");

  std::printf("%-12s %-14s %-14s %-14s %-6s %s\n", "parameter", r.measure_name.c_str(), "error", "rho_sq_sup",
              "cert", "min_slack");
  for (const auto& p : r.points)
    std::printf("%-12g %-14.6e %-14.6e %-14.6e %-6s %.3e\n", p.parameter, p.measure, p.error.total(),
                p.error.rho_sq, p.complete ? (p.certificate.holds ? "ok" : "FAIL") : "RUN", p.certificate.min_slack);
  if (r.slope_defined)
    std::printf("fitted slope %.4f over %zu points%s\n", r.fit.slope, r.fit.used,
                r.fit.discarded_largest ? " (largest parameter discarded)" : "");
  for (const auto& w : r.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  std::printf("outputs in %s\n", dir.string().c_str());
  for (const auto& p : r.points)
    if (!p.complete) return kSolverFailed;
  return r.certificates_hold() ? kOk : kCheckFailed;
}

int cmd_verify(const Common& o) {
  Scenario sc = load(o);
  auto grid = scenario_grid(sc);
  auto init = scenario_initial(sc, grid);
  require_admissible_start(sc, grid, init);
  AdmissibleBounds b = sc.bounds ? *sc.bounds : default_bounds(grid, sc.law, init);
  std::mt19937_64 rng(o.seed);
  bool ok = true;
  Manifest m = base_manifest("verify", o);
  m.merge(sc.resolved);
  m.set("verify.seed", std::to_string(o.seed));
  m.set("verify.samples", std::to_string(o.samples));
  auto report = [&](const std::string& key, bool pass, const std::string& detail) {
    std::printf("[%s] %s: %s\n", pass ? "PASS" : "FAIL", key.c_str(), detail.c_str());
    m.set("check." + key, std::string(pass ? "pass" : "fail") + " " + detail);
    ok = ok && pass;
  };
  char buf[256];

  auto st = check_structure(grid, sc.law, b, o.samples, rng);
  std::snprintf(buf, sizeof buf, "max|<Jz,z>|/|z|^2 = %.2e, max|J+J^T| = %.2e, C diagonal positive: %s, R >= 0: %s",
                st.max_skew, st.max_asymmetry, st.c_diagonal_positive ? "yes" : "no", st.r_nonnegative ? "yes" : "no");
  report("skew_symmetry", st.max_skew < 1e-12 && st.max_asymmetry == 0.0 && st.c_diagonal_positive && st.r_nonnegative,
         buf);

  try {
    auto sw = check_sandwich(grid, sc.law, b, o.samples, rng);
    std::snprintf(buf, sizeof buf, "%zu violations in %zu pairs, worst relative margin %.3e", sw.violations, sw.samples,
                  sw.worst);
    report("c0_sandwich", sw.violations == 0, buf);
  } catch (const std::domain_error& e) {
    report("c0_sandwich", false, e.what());
  }
  auto rd = check_relative_dissipation(grid, b, o.samples, rng);
  std::snprintf(buf, sizeof buf, "%zu violations in %zu pairs", rd.violations, rd.samples);
  report("relative_dissipation", rd.violations == 0, buf);

  if (grid.epsilon() > 0.0) {
    SolverConfig be = sc.solver;
    be.scheme = Scheme::backward_euler;
    be.bounds.reset();
    auto tb = run(grid, sc.law, init, be, sc.boundary);
    auto cb = check_trajectory(tb);
    std::snprintf(buf, sizeof buf, "backward Euler max signed residual %.3e over %zu steps", cb.max_balance_signed,
                  tb.steps.size());
    report("power_balance", tb.complete && cb.max_balance_signed <= 1e-10, buf);
    SolverConfig mp = be;
    mp.scheme = Scheme::implicit_midpoint;
    auto tm = run(grid, sc.law, init, mp, sc.boundary);
    auto cm = check_trajectory(tm);
    std::snprintf(buf, sizeof buf, "midpoint max |residual| %.3e (info)", cm.max_balance);
    std::printf("[INFO] power_balance_midpoint: %s\n", buf);
    m.set("info.power_balance_midpoint", buf);
    if (grid.junction_count() > 0) {
      double jm = std::max(cb.max_junction_mass, cm.max_junction_mass);
      double je = std::max(cb.max_junction_energy, cm.max_junction_energy);
      std::snprintf(buf, sizeof buf, "max|sum n m| = %.2e, max|sum n h m| = %.2e", jm, je);
      report("junction_conservation", tb.complete && tm.complete && jm < 1e-10 && je < 1e-10, buf);
    }
  }
  auto dir = out_dir(o, sc) / "verify";
  m.set("result", ok ? "pass" : "fail");
  m.write(dir / "manifest.txt");
  return ok ? kOk : kCheckFailed;
}

int cmd_mms(const Common& o) {
  MmsProblem pb;
  std::vector<std::size_t> cells{16, 32, 64};
  double dt = o.dt.value_or(1e-3);
  auto sp = mms_spatial(pb, cells, dt, 0.25);
  auto tm = mms_temporal(pb, 64, {0.04, 0.02, 0.01}, 0.4);
  double rest = mms_rest_deviation(GasLaw::isothermal(1.0), 1.0, 0.2, 1.0, 32, 20, 0.05);
  std::filesystem::path dir = o.out.empty() ? std::filesystem::path("out/mms") : std::filesystem::path(o.out);
  Manifest::write_text(dir / "spatial.csv", convergence_csv(sp));
  Manifest::write_text(dir / "temporal.csv", convergence_csv(tm));
  Manifest m = base_manifest("mms", o);
  m.set("mms.epsilon", pb.epsilon);
  m.set("mms.gamma", pb.gamma);
  m.set("mms.spatial_dt", dt);
  m.set("mms.spatial_order", sp.fitted_order);
  m.set("mms.temporal_order", tm.fitted_order);
  m.set("mms.rest_deviation", rest);
  m.write(dir / "manifest.txt");
  auto print = [](const ConvergenceTable& t) {
    for (const auto& r : t.rows) std::printf("  %s=%-10g error %.4e  order %.3f\n", t.variable.c_str(), r.h, r.error, r.order);
    std::printf("  fitted order %.3f\n", t.fitted_order);
  };
  std::printf("spatial (dt=%g):\n", dt);
  print(sp);
  std::printf("temporal (64 cells, midpoint):\n");
  print(tm);
  std::printf("rest state deviation after 20 steps: %.3e\n", rest);
  bool ok = sp.fitted_order >= 1.7 && sp.fitted_order <= 2.3 && tm.fitted_order >= 1.7 && tm.fitted_order <= 2.3 &&
            rest < 1e-12;
  return ok ? kOk : kCheckFailed;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gas transport on pipe networks: simulation, perturbation studies, verification"};
  app.require_subcommand(1);
  Common o;
  std::string kind;

  auto add_common = [&](CLI::App* sub, bool scenario) {
    if (scenario) {
      sub->add_option("scenario,--scenario", o.scenario, "scenario file");
    }
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--cells", o.cells, "cells per edge")->check(CLI::PositiveNumber);
    sub->add_option("--dt", o.dt, "time step")->check(CLI::PositiveNumber);
  };

  auto* sim = app.add_subcommand("simulate", "run a scenario");
  add_common(sim, true);
  sim->add_option("--scheme", o.scheme, "midpoint | backward_euler");

  auto* study = app.add_subcommand("study", "perturbation study");
  study->add_option("kind", kind, "epsilon | gamma | boundary")
      ->required()
      ->check(CLI::IsMember({"epsilon", "gamma", "boundary"}));
  add_common(study, true);
  study->add_option("--eps-list", o.eps_list, "decreasing eps values")->delimiter(',');
  study->add_option("--gamma-offsets", o.gamma_offsets, "friction offsets")->delimiter(',');
  study->add_option("--amplitudes", o.amplitudes, "boundary perturbation amplitudes")->delimiter(',');
  study->add_option("--threads", o.threads, "worker threads (default: scenario setting)");

  auto* verify = app.add_subcommand("verify", "invariant suite on a scenario");
  add_common(verify, true);
  verify->add_option("--seed", o.seed, "seed for random state sampling");
  verify->add_option("--samples", o.samples, "random states / pairs per check");

  auto* mms = app.add_subcommand("mms", "manufactured-solution convergence");
  mms->add_option("--out", o.out, "output directory");
  mms->add_option("--dt", o.dt, "time step of the spatial study")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kBadInput;
  }

  try {
    if ((sim->parsed() || study->parsed() || verify->parsed()) && o.scenario.empty()) {
      std::fprintf(stderr, "error: a scenario file is required\n");
      return kBadInput;
    }
    if (sim->parsed()) return cmd_simulate(o);
    if (study->parsed()) return cmd_study(kind, o);
    if (verify->parsed()) return cmd_verify(o);
    return cmd_mms(o);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kBadInput;
  } catch (const BoundaryDataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kBadInput;
  } catch (const StepFailure& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kSolverFailed;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kBadInput;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kSolverFailed;
  }
}
