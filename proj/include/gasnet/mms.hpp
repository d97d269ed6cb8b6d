#pragma once

// Manufactured solutions on a single pipe [0, 1] with constant area and
// friction:
//   rho~ = 1 + 0.1 cos(pi x)(1 + 0.5 sin(2 pi tau))
//   w~   = 0.5 + 0.2 cos(pi x) cos(2 pi tau)
// Forcing follows from the strong form
//   a rho_t + (a rho w)_x = f_rho,   eps^2 w_t + (eps^2 w^2/2 + P'(rho))_x + gamma |w| w = f_w,
// and the ports carry h~ = eps^2 w~^2/2 + P'(rho~).

#include <cmath>
#include <numbers>
#include <vector>

#include "gasnet/solver.hpp"

namespace gasnet {

struct MmsProfile {
  double rho(double x, double t) const { return 1.0 + 0.1 * std::cos(pi * x) * (1.0 + 0.5 * std::sin(2 * pi * t)); }
  double rho_x(double x, double t) const { return -0.1 * pi * std::sin(pi * x) * (1.0 + 0.5 * std::sin(2 * pi * t)); }
  double rho_t(double x, double t) const { return 0.1 * std::cos(pi * x) * pi * std::cos(2 * pi * t); }
  double w(double x, double t) const { return 0.5 + 0.2 * std::cos(pi * x) * std::cos(2 * pi * t); }
  double w_x(double x, double t) const { return -0.2 * pi * std::sin(pi * x) * std::cos(2 * pi * t); }
  double w_t(double x, double t) const { return -0.4 * pi * std::cos(pi * x) * std::sin(2 * pi * t); }

  static constexpr double pi = std::numbers::pi;
};

struct MmsProblem {
  GasLaw law = GasLaw::isothermal(1.0);
  double epsilon = 0.5;
  double gamma = 1.0;
  double area = 1.0;
  MmsProfile profile;

  NetworkTopology topology() const {
    PipeParameters p;
    p.epsilon = epsilon;
    p.friction = Profile::constant(gamma);
    p.area = Profile::constant(area);
    return NetworkTopology::single_pipe(p);
  }

  double mass_forcing(double x, double t) const {
    const auto& m = profile;
    return area * (m.rho_t(x, t) + m.rho_x(x, t) * m.w(x, t) + m.rho(x, t) * m.w_x(x, t));
  }

  double momentum_forcing(double x, double t) const {
    const auto& m = profile;
    double w = m.w(x, t), e2 = epsilon * epsilon;
    return e2 * m.w_t(x, t) + e2 * w * m.w_x(x, t) + law.potential_d2(m.rho(x, t)) * m.rho_x(x, t) +
           gamma * std::abs(w) * w;
  }

  double enthalpy(double x, double t) const {
    double w = profile.w(x, t);
    return 0.5 * epsilon * epsilon * w * w + law.potential_d1(profile.rho(x, t));
  }

  Forcing forcing() const {
    return Forcing{[this](std::size_t, double x, double t) { return mass_forcing(x, t); },
                   [this](std::size_t, double x, double t) { return momentum_forcing(x, t); }};
  }

  BoundaryData boundary() const {
    return {{0, Schedule::function([this](double t) { return enthalpy(0.0, t); }, "manufactured h(0, tau)")},
            {1, Schedule::function([this](double t) { return enthalpy(1.0, t); }, "manufactured h(1, tau)")}};
  }

  NetworkState exact(const NetworkGrid& grid, double t) const {
    return make_state(grid, [&](std::size_t, double x) { return profile.rho(x, t); },
                      [&](std::size_t, double x) { return profile.w(x, t); }, t);
  }
};

/// sqrt(sum dx |d rho|^2 + sum wt |d w|^2).
inline double state_l2_error(const NetworkGrid& grid, const NetworkState& a, const NetworkState& b) {
  double s = 0.0;
  for (std::size_t c = 0; c < grid.cell_count(); ++c) s += grid.cells()[c].dx * std::pow(a.rho[c] - b.rho[c], 2);
  for (std::size_t f = 0; f < grid.face_count(); ++f) s += grid.faces()[f].weight * std::pow(a.w[f] - b.w[f], 2);
  return std::sqrt(s);
}

struct ConvergenceRow {
  double h = 0.0;       // dx or dt
  double error = 0.0;
  double order = NAN;   // against the previous row
};

struct ConvergenceTable {
  std::string variable;
  std::vector<ConvergenceRow> rows;
  double fitted_order = NAN; // least squares over all rows
};

namespace detail {

inline void fill_orders(ConvergenceTable& t) {
  for (std::size_t k = 1; k < t.rows.size(); ++k)
    t.rows[k].order = std::log(t.rows[k - 1].error / t.rows[k].error) / std::log(t.rows[k - 1].h / t.rows[k].h);
  double n = static_cast<double>(t.rows.size()), sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& r : t.rows) {
    double lx = std::log(r.h), ly = std::log(r.error);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  if (t.rows.size() >= 2) t.fitted_order = (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

inline Trajectory mms_run(const MmsProblem& pb, const NetworkGrid& grid, double dt, double T, Scheme scheme,
                          double tol) {
  SolverConfig cfg;
  cfg.dt = dt;
  cfg.final_time = T;
  cfg.scheme = scheme;
  cfg.newton_tol = tol;
  auto f = pb.forcing();
  auto t = run(grid, pb.law, pb.exact(grid, 0.0), cfg, pb.boundary(), &f);
  if (!t.complete) throw StepFailure("manufactured solution run failed: " + t.failure, 0.0, 0, NAN);
  return t;
}

} // namespace detail

/// Error against the exact profile at time T for each cell count, fixed dt.
inline ConvergenceTable mms_spatial(const MmsProblem& pb, const std::vector<std::size_t>& cells, double dt,
                                    double T, Scheme scheme = Scheme::implicit_midpoint) {
  ConvergenceTable t;
  t.variable = "dx";
  for (std::size_t n : cells) {
    NetworkGrid grid(pb.topology(), n);
    auto traj = detail::mms_run(pb, grid, dt, T, scheme, 1e-12);
    t.rows.push_back({1.0 / static_cast<double>(n), state_l2_error(grid, traj.snapshots.back(), pb.exact(grid, T)), NAN});
  }
  detail::fill_orders(t);
  return t;
}

/// Self-convergence in dt on a fixed grid against a run with dt_min / 4.
inline ConvergenceTable mms_temporal(const MmsProblem& pb, std::size_t cells, const std::vector<double>& dts,
                                     double T, Scheme scheme = Scheme::implicit_midpoint) {
  ConvergenceTable t;
  t.variable = "dt";
  NetworkGrid grid(pb.topology(), cells);
  double dmin = *std::min_element(dts.begin(), dts.end());
  auto ref = detail::mms_run(pb, grid, dmin / 4.0, T, scheme, 1e-13).snapshots.back();
  for (double dt : dts) {
    auto traj = detail::mms_run(pb, grid, dt, T, scheme, 1e-12);
    t.rows.push_back({dt, state_l2_error(grid, traj.snapshots.back(), ref), NAN});
  }
  detail::fill_orders(t);
  return t;
}

/// Rest state over a linear elevation: P'(rho) + g z = h0, w = 0. Returns the
/// largest deviation from the initial state after `steps` midpoint steps.
inline double mms_rest_deviation(const GasLaw& law, double gravity, double slope, double h0, std::size_t cells,
                                 std::size_t steps, double dt) {
  PipeParameters p;
  p.epsilon = 0.5;
  p.gravity = gravity;
  p.elevation = Profile({0.0, 1.0}, {0.0, slope});
  NetworkGrid grid(NetworkTopology::single_pipe(p), cells);
  NetworkState s;
  for (const auto& c : grid.cells()) s.rho.push_back(law.inverse_potential_d1(h0 - gravity * c.elevation));
  s.w.assign(grid.face_count(), 0.0);
  BoundaryData bd{{0, Schedule::constant(h0)}, {1, Schedule::constant(h0)}};
  SolverConfig cfg;
  cfg.dt = dt;
  cfg.final_time = dt * static_cast<double>(steps);
  auto t = run(grid, law, s, cfg, bd);
  if (!t.complete) throw StepFailure("rest state run failed: " + t.failure, 0.0, 0, NAN);
  double dev = 0.0;
  for (std::size_t c = 0; c < grid.cell_count(); ++c) dev = std::max(dev, std::abs(t.snapshots.back().rho[c] - s.rho[c]));
  for (double w : t.snapshots.back().w) dev = std::max(dev, std::abs(w));
  return dev;
}

} // namespace gasnet
