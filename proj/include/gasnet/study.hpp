#pragma once

// Perturbation studies: parabolic limit in epsilon, friction offsets and
// boundary-enthalpy offsets. Every sweep point runs a pair (u, u_hat) on the
// same grid and step, measures
//   sup_tau ||rho - rho_hat||_{L2}^2 + int ||w - w_hat||_{L3}^3 dtau
// and checks the Gronwall bound for the pair.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "gasnet/energy.hpp"
#include "gasnet/scenario.hpp"
#include "gasnet/solver.hpp"

namespace gasnet {

/// Runs fn(0..n-1) on up to `threads` workers; the first exception is rethrown.
inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t k = 0; k < n; ++k) fn(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex m;
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < n; k = next++) {
          try {
            fn(k);
          } catch (...) {
            std::lock_guard lock(m);
            if (!error) error = std::current_exception();
          }
        }
      });
  }
  if (error) std::rethrow_exception(error);
}

struct PairError {
  double rho_sq = 0.0; // sup_tau ||rho - rho_hat||^2 (dx weights)
  double w_cubed = 0.0; // int ||w - w_hat||_{L3}^3 (trapezoid in tau)
  double total() const { return rho_sq + w_cubed; }
};

inline PairError trajectory_error(const NetworkGrid& grid, const std::vector<NetworkState>& u,
                                  const std::vector<NetworkState>& uh) {
  if (u.size() != uh.size() || u.empty()) throw std::invalid_argument("trajectory error: snapshot counts differ");
  PairError e;
  double prev = 0.0;
  for (std::size_t n = 0; n < u.size(); ++n) {
    std::vector<double> dr(grid.cell_count()), dw(grid.face_count());
    for (std::size_t c = 0; c < dr.size(); ++c) dr[c] = u[n].rho[c] - uh[n].rho[c];
    for (std::size_t f = 0; f < dw.size(); ++f) dw[f] = u[n].w[f] - uh[n].w[f];
    e.rho_sq = std::max(e.rho_sq, l2_sq_cells(grid, dr));
    double l3 = l3_cubed(grid, dw);
    if (n > 0) e.w_cubed += 0.5 * (u[n].tau - u[n - 1].tau) * (prev + l3);
    prev = l3;
  }
  return e;
}

struct SlopeFit {
  double slope = NAN;
  double intercept = NAN;
  std::size_t used = 0;
  bool discarded_largest = false;
};

/// Least-squares slope of log y against log x. The point with the largest x is
/// dropped when its log residual exceeds log(1.1) and three points remain.
inline SlopeFit fit_loglog(std::vector<double> x, std::vector<double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("slope fit: size mismatch");
  for (std::size_t k = 0; k < x.size(); ++k)
    if (!(x[k] > 0.0) || !(y[k] > 0.0)) throw std::invalid_argument("slope fit: values must be positive");
  auto fit = [](const std::vector<double>& xs, const std::vector<double>& ys) {
    double n = static_cast<double>(xs.size()), sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      double lx = std::log(xs[k]), ly = std::log(ys[k]);
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
    }
    double den = n * sxx - sx * sx;
    if (!(std::abs(den) > 1e-14 * std::max(1.0, n * sxx)))
      throw std::invalid_argument("slope fit: sweep values must be distinct");
    SlopeFit f;
    f.slope = (n * sxy - sx * sy) / den;
    f.intercept = (sy - f.slope * sx) / n;
    f.used = xs.size();
    return f;
  };
  if (x.size() < 3) throw std::invalid_argument("slope fit: at least three sweep points required");
  SlopeFit f = fit(x, y);
  auto top = static_cast<std::size_t>(std::max_element(x.begin(), x.end()) - x.begin());
  double r = std::log(y[top]) - (f.intercept + f.slope * std::log(x[top]));
  if (std::abs(r) > std::log(1.1) && x.size() > 3) {
    x.erase(x.begin() + static_cast<std::ptrdiff_t>(top));
    y.erase(y.begin() + static_cast<std::ptrdiff_t>(top));
    f = fit(x, y);
    f.discarded_largest = true;
  }
  return f;
}

struct Certificate {
  bool holds = false;
  double min_slack = NAN;
  std::size_t excluded = 0;
  double c = NAN; // growth rate used
  std::vector<std::string> warnings;
};

struct StudyPoint {
  double parameter = 0.0; // eps, gamma offset or amplitude
  double measure = 0.0;   // abscissa of the fit: eps^2, |gamma - gamma_hat|, int |h - h_hat|
  PairError error;
  bool complete = true;
  std::string failure;
  Certificate certificate;
  double seconds = 0.0;
};

struct StudyResult {
  std::string kind;
  std::string measure_name;
  std::vector<StudyPoint> points;
  SlopeFit fit;
  bool slope_defined = false;
  std::vector<std::string> warnings;
  std::vector<std::pair<std::string, std::string>> settings;

  bool certificates_hold() const {
    for (const auto& p : points)
      if (!p.complete || !p.certificate.holds || p.certificate.excluded > 0) return false;
    return !points.empty();
  }
};

/// Smallest admissible box containing both trajectories, widened by 5 %.
inline AdmissibleBounds envelope_bounds(const NetworkGrid& grid, const NetworkGrid& grid_hat,
                                        const std::vector<NetworkState>& u, const std::vector<NetworkState>& uh) {
  AdmissibleBounds b;
  double rmin = INFINITY, rmax = 0.0, wmax = 0.0;
  for (const auto* traj : {&u, &uh})
    for (const auto& s : *traj) {
      for (double r : s.rho) {
        rmin = std::min(rmin, r);
        rmax = std::max(rmax, r);
      }
      for (double w : s.w) wmax = std::max(wmax, std::abs(w));
    }
  b.rho_min = rmin / 1.05;
  b.rho_max = rmax * 1.05;
  b.w_max = std::max(wmax * 1.05, 1e-12);
  b.eps_max = std::max(grid.epsilon(), grid_hat.epsilon());
  b.area_min = b.gamma_min = b.gz_max = INFINITY;
  b.area_max = b.gamma_max = 0.0;
  for (const auto* g : {&grid, &grid_hat}) {
    for (const auto& c : g->cells()) {
      b.area_min = std::min(b.area_min, c.area);
      b.area_max = std::max(b.area_max, c.area);
    }
    for (const auto& f : g->faces()) {
      b.gamma_min = std::min(b.gamma_min, f.friction);
      b.gamma_max = std::max(b.gamma_max, f.friction);
    }
  }
  double gz = 0.0;
  for (const auto& c : grid.cells()) gz = std::max(gz, std::abs(grid.gravity() * c.elevation));
  b.gz_max = gz;
  return b;
}

/// Gronwall check for a pair: u solves the problem of `grid` with data h,
/// u_hat the problem of `grid_hat` with data h_hat.
inline Certificate certify_pair(const NetworkGrid& grid, const NetworkGrid& grid_hat, const GasLaw& law,
                                const std::vector<NetworkState>& u, const std::vector<NetworkState>& uh,
                                const BoundaryData& h, const BoundaryData& h_hat,
                                const std::optional<AdmissibleBounds>& bounds) {
  Certificate cert;
  try {
    AdmissibleBounds b = bounds ? *bounds : envelope_bounds(grid, grid_hat, u, uh);
    std::size_t ends = 2 * grid.topology().edge_count();
    auto k = stability_constants(b, law, solution_rates(uh), std::max(grid.epsilon(), grid_hat.epsilon()),
                                 grid.vertex_class().boundary.size(), ends);
    auto res = residual_fields(grid, grid_hat, uh);
    GronwallInput in;
    in.grid = &grid;
    in.law = &law;
    in.u = &u;
    in.uhat = &uh;
    in.constants = k;
    in.bounds = b;
    for (std::size_t n = 0; n < u.size(); ++n) {
      in.perturbation.push_back(perturbation_functional(grid, res[n], k));
      in.boundary_perturbation.push_back(
          boundary_perturbation(grid, h, h_hat, grid.epsilon(), grid_hat.epsilon(), k.Cboundary, u[n].tau));
    }
    auto r = gronwall_monitor(in);
    cert.holds = r.holds && r.excluded == 0;
    cert.min_slack = r.min_slack;
    cert.excluded = r.excluded;
    cert.c = k.c;
    cert.warnings = r.warnings;
  } catch (const std::exception& e) {
    cert.holds = false;
    cert.warnings.push_back(std::string("certificate unavailable: ") + e.what());
  }
  return cert;
}

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline void finish_fit(StudyResult& r) {
  std::vector<double> x, y;
  for (const auto& p : r.points)
    if (p.complete && p.measure > 0.0 && p.error.total() > 0.0) {
      x.push_back(p.measure);
      y.push_back(p.error.total());
    }
  if (x.size() >= 3) {
    r.fit = fit_loglog(x, y);
    r.slope_defined = true;
  } else {
    r.warnings.push_back("slope undefined: fewer than three usable sweep points");
  }
  for (const auto& p : r.points) {
    if (!p.complete) r.warnings.push_back("point " + format_double(p.parameter) + " failed: " + p.failure);
    for (const auto& w : p.certificate.warnings) r.warnings.push_back("point " + format_double(p.parameter) + ": " + w);
  }
}

inline void require_sweep(const std::vector<double>& v, const std::string& what) {
  if (v.empty()) throw std::invalid_argument(what + ": empty sweep");
  for (double x : v)
    if (!std::isfinite(x)) throw std::invalid_argument(what + ": non-finite sweep value");
}

} // namespace detail

struct StudyOptions {
  std::optional<std::size_t> cells;
  std::optional<double> dt;
  std::size_t threads = 1;
  bool certify = true;
};

/// Hyperbolic problems for each eps against the limit problem. Both use
/// backward Euler with the same step; the limit run uses a 10x tighter Newton
/// tolerance. Initial velocity is the limit velocity of the initial density.
inline StudyResult epsilon_limit_study(const Scenario& sc, const std::vector<double>& eps_list,
                                       const StudyOptions& opt = {}) {
  detail::require_sweep(eps_list, "epsilon study");
  if (eps_list.size() < 3) throw std::invalid_argument("epsilon study: at least three values of eps required");
  for (std::size_t k = 0; k < eps_list.size(); ++k) {
    if (!(eps_list[k] > 0.0)) throw std::invalid_argument("epsilon study: eps = 0 is the limit itself");
    if (k > 0 && !(eps_list[k] < eps_list[k - 1]))
      throw std::invalid_argument("epsilon study: eps list must be strictly decreasing");
  }
  StudyResult out;
  out.kind = "epsilon";
  out.measure_name = "eps^2";

  const NetworkGrid base = scenario_grid(sc, opt.cells);
  const NetworkGrid limit_grid = base.with_epsilon(0.0);
  NetworkState init = scenario_initial(sc, limit_grid);
  {
    auto ports = port_values(limit_grid, sc.boundary, 0.0, {});
    auto jh = solve_junction_enthalpies(limit_grid, sc.law, init.rho);
    for (std::size_t k = 0; k < limit_grid.junction_count(); ++k) ports[limit_grid.junction_vertex(k)] = jh[k];
    init.w = velocity_recovery_parabolic(limit_grid, sc.law, init.rho, ports);
  }
  SolverConfig cfg = sc.solver;
  if (opt.dt) cfg.dt = *opt.dt;
  cfg.scheme = Scheme::backward_euler;
  cfg.bounds.reset();
  SolverConfig ref_cfg = cfg;
  ref_cfg.parabolic = true;
  ref_cfg.newton_tol = cfg.newton_tol / 10.0;
  cfg.parabolic = false;

  out.settings = {{"study", "epsilon"},
                  {"cells", std::to_string(base.cells().size() / std::max<std::size_t>(1, base.topology().edge_count()))},
                  {"dt", format_double(cfg.dt)},
                  {"scheme", to_string(cfg.scheme)},
                  {"newton_tol", format_double(cfg.newton_tol)},
                  {"reference_newton_tol", format_double(ref_cfg.newton_tol)}};

  Trajectory ref = run(limit_grid, sc.law, init, ref_cfg, sc.boundary);
  if (!ref.complete) throw StepFailure("epsilon study: limit problem failed: " + ref.failure, 0.0, 0, NAN);

  out.points.resize(eps_list.size());
  parallel_for(eps_list.size(), opt.threads, [&](std::size_t k) {
    auto t0 = std::chrono::steady_clock::now();
    StudyPoint& p = out.points[k];
    p.parameter = eps_list[k];
    p.measure = eps_list[k] * eps_list[k];
    NetworkGrid grid = base.with_epsilon(eps_list[k]);
    Trajectory t = run(grid, sc.law, init, cfg, sc.boundary);
    p.complete = t.complete;
    p.failure = t.failure;
    if (t.complete) {
      p.error = trajectory_error(grid, t.snapshots, ref.snapshots);
      if (opt.certify)
        p.certificate = certify_pair(grid, limit_grid, sc.law, t.snapshots, ref.snapshots, sc.boundary, sc.boundary,
                                     sc.bounds);
    }
    p.seconds = detail::seconds_since(t0);
  });
  detail::finish_fit(out);
  return out;
}

namespace detail {

inline void check_offsets(const std::vector<double>& v, const std::string& what) {
  require_sweep(v, what);
  int sign = 0;
  for (double x : v) {
    if (x == 0.0) continue;
    int s = x > 0 ? 1 : -1;
    if (sign != 0 && s != sign) throw std::invalid_argument(what + ": nonzero entries must share one sign");
    sign = s;
  }
}

} // namespace detail

/// Unperturbed problem (scenario friction, 10x tighter tolerance) against
/// problems with friction gamma + offset on every pipe.
inline StudyResult gamma_perturbation_study(const Scenario& sc, const std::vector<double>& offsets,
                                            const StudyOptions& opt = {}) {
  detail::check_offsets(offsets, "gamma study");
  const NetworkGrid grid = scenario_grid(sc, opt.cells);
  if (!(grid.epsilon() > 0.0)) throw std::invalid_argument("gamma study: needs eps > 0");
  for (double d : offsets) {
    for (const auto& f : grid.faces()) {
      double gh = f.friction + d;
      if (!(gh > 0.0)) throw std::invalid_argument("gamma study: perturbed friction must stay positive");
      if (sc.bounds && (gh < sc.bounds->gamma_min - 1e-12 || gh > sc.bounds->gamma_max + 1e-12))
        throw std::invalid_argument("gamma study: perturbed friction " + format_double(gh) + " outside [" +
                                    format_double(sc.bounds->gamma_min) + ", " + format_double(sc.bounds->gamma_max) +
                                    "]");
    }
  }
  StudyResult out;
  out.kind = "gamma";
  out.measure_name = "|gamma - gamma_hat|";
  NetworkState init = scenario_initial(sc, grid);
  SolverConfig cfg = sc.solver;
  if (opt.dt) cfg.dt = *opt.dt;
  cfg.parabolic = false;
  cfg.bounds.reset();
  SolverConfig ref_cfg = cfg;
  ref_cfg.newton_tol = cfg.newton_tol / 10.0;
  out.settings = {{"study", "gamma"}, {"dt", format_double(cfg.dt)}, {"scheme", to_string(cfg.scheme)},
                  {"newton_tol", format_double(cfg.newton_tol)}, {"reference_newton_tol", format_double(ref_cfg.newton_tol)}};

  Trajectory ref = run(grid, sc.law, init, ref_cfg, sc.boundary);
  if (!ref.complete) throw StepFailure("gamma study: unperturbed problem failed: " + ref.failure, 0.0, 0, NAN);

  out.points.resize(offsets.size());
  parallel_for(offsets.size(), opt.threads, [&](std::size_t k) {
    auto t0 = std::chrono::steady_clock::now();
    StudyPoint& p = out.points[k];
    const double d = offsets[k];
    p.parameter = d;
    p.measure = std::abs(d);
    NetworkGrid grid_hat =
        grid.rebuilt(grid.topology().transformed([d](PipeParameters& pp) { pp.friction = pp.friction.shifted(d); }));
    Trajectory t = run(grid_hat, sc.law, init, cfg, sc.boundary);
    p.complete = t.complete;
    p.failure = t.failure;
    if (t.complete) {
      p.error = trajectory_error(grid, ref.snapshots, t.snapshots);
      if (opt.certify)
        p.certificate = certify_pair(grid, grid_hat, sc.law, ref.snapshots, t.snapshots, sc.boundary, sc.boundary,
                                     sc.bounds);
    }
    p.seconds = detail::seconds_since(t0);
  });
  detail::finish_fit(out);
  return out;
}

/// Boundary offsets h_hat = h + A sin(pi tau / T) at the selected vertices
/// (default: the first boundary vertex).
inline BoundaryData perturbed_boundary(const NetworkGrid& grid, const BoundaryData& h,
                                       const std::vector<std::size_t>& vertices, double amplitude, double T) {
  BoundaryData out = h;
  for (std::size_t v : vertices) {
    if (!h.count(v)) throw std::invalid_argument("boundary perturbation: '" + grid.topology().vertices()[v] +
                                                 "' is not a boundary vertex");
    Schedule base = h.at(v);
    out[v] = Schedule::function(
        [base, amplitude, T](double tau) { return base(tau) + amplitude * std::sin(std::numbers::pi * tau / T); },
        base.description() + " + " + format_double(amplitude) + " sin(pi tau/" + format_double(T) + ")");
  }
  return out;
}

/// int_0^T |h - h_hat|_boundary dtau by composite Simpson on 2000 panels.
inline double boundary_discrepancy(const NetworkGrid& grid, const BoundaryData& h, const BoundaryData& h_hat,
                                   double T) {
  auto norm = [&](double tau) {
    double sq = 0.0;
    for (std::size_t v : grid.vertex_class().boundary) {
      double d = h.at(v)(tau) - h_hat.at(v)(tau);
      sq += d * d;
    }
    return std::sqrt(sq);
  };
  const int n = 2000;
  double step = T / n, s = norm(0.0) + norm(T);
  for (int k = 1; k < n; ++k) s += (k % 2 ? 4.0 : 2.0) * norm(k * step);
  return s * step / 3.0;
}

inline StudyResult boundary_perturbation_study(const Scenario& sc, const std::vector<double>& amplitudes,
                                               const StudyOptions& opt = {}) {
  detail::require_sweep(amplitudes, "boundary study");
  for (double a : amplitudes)
    if (a < 0.0) throw std::invalid_argument("boundary study: amplitudes must be non-negative");
  const NetworkGrid grid = scenario_grid(sc, opt.cells);
  std::vector<std::size_t> vertices;
  for (const auto& n : sc.study.perturb) vertices.push_back(sc.topology.vertex_index(n));
  if (vertices.empty()) vertices.push_back(grid.vertex_class().boundary.front());

  StudyResult out;
  out.kind = "boundary";
  out.measure_name = "int |h - h_hat|";
  NetworkState init = scenario_initial(sc, grid);
  SolverConfig cfg = sc.solver;
  if (opt.dt) cfg.dt = *opt.dt;
  cfg.bounds.reset();
  SolverConfig ref_cfg = cfg;
  ref_cfg.newton_tol = cfg.newton_tol / 10.0;
  std::string names;
  for (std::size_t v : vertices) names += (names.empty() ? "" : ",") + grid.topology().vertices()[v];
  out.settings = {{"study", "boundary"}, {"perturbed", names}, {"dt", format_double(cfg.dt)},
                  {"scheme", to_string(cfg.scheme)}, {"newton_tol", format_double(cfg.newton_tol)},
                  {"reference_newton_tol", format_double(ref_cfg.newton_tol)}};

  Trajectory ref = run(grid, sc.law, init, ref_cfg, sc.boundary);
  if (!ref.complete) throw StepFailure("boundary study: unperturbed problem failed: " + ref.failure, 0.0, 0, NAN);

  out.points.resize(amplitudes.size());
  parallel_for(amplitudes.size(), opt.threads, [&](std::size_t k) {
    auto t0 = std::chrono::steady_clock::now();
    StudyPoint& p = out.points[k];
    p.parameter = amplitudes[k];
    BoundaryData hh = perturbed_boundary(grid, sc.boundary, vertices, amplitudes[k], cfg.final_time);
    p.measure = boundary_discrepancy(grid, sc.boundary, hh, cfg.final_time);
    SolverConfig pc = cfg;
    if (sc.bounds) pc.bounds = sc.bounds;
    Trajectory t = run(grid, sc.law, init, pc, hh);
    p.complete = t.complete;
    p.failure = t.failure;
    for (const auto& w : t.warnings) p.certificate.warnings.push_back("inadmissible " + w);
    if (t.complete) {
      p.error = trajectory_error(grid, ref.snapshots, t.snapshots);
      if (opt.certify) {
        auto warn = std::move(p.certificate.warnings);
        p.certificate = certify_pair(grid, grid, sc.law, ref.snapshots, t.snapshots, sc.boundary, hh, sc.bounds);
        p.certificate.warnings.insert(p.certificate.warnings.begin(), warn.begin(), warn.end());
      }
    }
    p.seconds = detail::seconds_since(t0);
  });
  detail::finish_fit(out);
  return out;
}

} // namespace gasnet
