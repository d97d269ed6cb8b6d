#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gasnet/discretization.hpp"
#include "gasnet/gas_model.hpp"
#include "gasnet/solver.hpp"

namespace gasnet {

struct EnergyReport {
  double tau = 0.0;
  double H = 0.0;
  double D = 0.0;
  double flux = 0.0;     // power delivered through the boundary ports
  double residual = 0.0; // power-balance residual of the step ending here
};

struct RelativeReport {
  double tau = 0.0;
  double relative_energy = 0.0;
  double relative_dissipation = 0.0;
  double distance_sq = 0.0; // ||u - u_hat||_C^2
  double perturbation = 0.0;          // P(e_hat)
  double boundary_perturbation = 0.0; // P_boundary
  double lhs = 0.0, rhs = 0.0, slack = 0.0;
  bool admissible = true;
};

/// sum_f wt gamma (a rho)_f |w_f|^3, i.e. <R(u) z(u), z(u)>.
inline double dissipation(const NetworkGrid& grid, const NetworkState& s) {
  check_layout(grid, s);
  double d = 0.0;
  for (std::size_t f = 0; f < grid.face_count(); ++f) {
    const auto& face = grid.faces()[f];
    d += face.weight * face.friction * grid.face_area_density(f, s.rho) * std::pow(std::abs(s.w[f]), 3);
  }
  return d;
}

/// <B h_boundary, z(u)>: sum over boundary vertices of -n h m.
inline double boundary_flux(const NetworkGrid& grid, const NetworkState& s, const BoundaryData& boundary) {
  check_layout(grid, s);
  double phi = 0.0;
  for (std::size_t v : grid.vertex_class().boundary) {
    auto it = boundary.find(v);
    if (it == boundary.end())
      throw BoundaryDataError("missing boundary enthalpy at boundary vertex '" + grid.topology().vertices()[v] + "'");
    double hv = it->second(s.tau);
    for (std::size_t f : grid.port_faces(v))
      phi += -grid.faces()[f].incidence * hv * grid.face_area_density(f, s.rho) * s.w[f];
  }
  return phi;
}

inline double c_norm_sq(const NetworkGrid& grid, std::span<const double> d_rho, std::span<const double> d_w) {
  return c_inner(grid, d_rho, d_w, d_rho, d_w);
}

inline double c_distance_sq(const NetworkGrid& grid, const NetworkState& u, const NetworkState& uh) {
  check_layout(grid, u);
  check_layout(grid, uh);
  double s = 0.0;
  for (std::size_t c = 0; c < grid.cell_count(); ++c) s += grid.cell_weight(c) * std::pow(u.rho[c] - uh.rho[c], 2);
  for (std::size_t f = 0; f < grid.face_count(); ++f) s += grid.face_weight(f) * std::pow(u.w[f] - uh.w[f], 2);
  return s;
}

/// Bregman distance of the discrete energy, H(u) - H(u_hat) - <H'(u_hat), u - u_hat>,
/// evaluated in the cancellation-free form (gravity drops out).
inline double relative_energy(const NetworkGrid& grid, const NetworkState& u, const NetworkState& uh,
                              const GasLaw& law) {
  require_positive_density(grid, u);
  require_positive_density(grid, uh);
  const double eps2 = grid.epsilon() * grid.epsilon();
  double H = 0.0;
  for (std::size_t c = 0; c < grid.cell_count(); ++c) {
    const auto& cell = grid.cells()[c];
    double r = u.rho[c], rh = uh.rho[c];
    double pot = law.potential(r) - law.potential(rh) - law.potential_d1(rh) * (r - rh);
    double kin = 0.0;
    for (std::size_t f : {cell.left_face, cell.right_face}) {
      double w = u.w[f], wh = uh.w[f];
      kin += 0.5 * (r * (w * w - wh * wh) / 2.0 - rh * wh * (w - wh));
    }
    H += grid.cell_weight(c) * (pot + eps2 * kin);
  }
  return H;
}

/// (1/16) sum_f wt gamma (a rho_hat)_f (|w| + |w_hat|) (w - w_hat)^2.
inline double relative_dissipation(const NetworkGrid& grid, const NetworkState& u, const NetworkState& uh) {
  check_layout(grid, u);
  check_layout(grid, uh);
  double d = 0.0;
  for (std::size_t f = 0; f < grid.face_count(); ++f) {
    const auto& face = grid.faces()[f];
    double dw = u.w[f] - uh.w[f];
    d += face.weight * face.friction * grid.face_area_density(f, uh.rho) *
         (std::abs(u.w[f]) + std::abs(uh.w[f])) * dw * dw;
  }
  return d / 16.0;
}

/// sum_f wt |dw|^3.
inline double l3_cubed(const NetworkGrid& grid, std::span<const double> dw) {
  double s = 0.0;
  for (std::size_t f = 0; f < grid.face_count(); ++f) s += grid.faces()[f].weight * std::pow(std::abs(dw[f]), 3);
  return s;
}

/// sum_c dx |d rho|^2 (no area weight).
inline double l2_sq_cells(const NetworkGrid& grid, std::span<const double> d) {
  double s = 0.0;
  for (std::size_t c = 0; c < grid.cell_count(); ++c) s += grid.cells()[c].dx * d[c] * d[c];
  return s;
}

/// <C dtau_uh, z(u) - z(uh) - G(uh)(u - uh)> from the co-state map directly.
inline double c2_quantity_direct(const NetworkGrid& grid, const NetworkState& u, const NetworkState& uh,
                                 const NetworkState& dtau_uh, const GasLaw& law) {
  CoState zu = costate(grid, u, law), zh = costate(grid, uh, law);
  NetworkState d;
  for (std::size_t c = 0; c < grid.cell_count(); ++c) d.rho.push_back(u.rho[c] - uh.rho[c]);
  for (std::size_t f = 0; f < grid.face_count(); ++f) d.w.push_back(u.w[f] - uh.w[f]);
  CoState g = hessian_apply(grid, uh, d, law);
  std::vector<double> a, b;
  for (std::size_t c = 0; c < grid.cell_count(); ++c) a.push_back(zu.h[c] - zh.h[c] - g.h[c]);
  for (std::size_t f = 0; f < grid.face_count(); ++f) b.push_back(zu.m[f] - zh.m[f] - g.m[f]);
  return c_inner(grid, dtau_uh.rho, dtau_uh.w, a, b);
}

/// Same quantity from the closed form: cells P'(rho|rho_hat) + eps^2 (dw_l^2 + dw_r^2)/4,
/// faces (a (rho - rho_hat))_f (w - w_hat).
inline double c2_quantity_closed(const NetworkGrid& grid, const NetworkState& u, const NetworkState& uh,
                                 const NetworkState& dtau_uh, const GasLaw& law) {
  const double eps2 = grid.epsilon() * grid.epsilon();
  std::vector<double> a(grid.cell_count()), b(grid.face_count()), drho(grid.cell_count());
  for (std::size_t c = 0; c < grid.cell_count(); ++c) {
    const auto& cell = grid.cells()[c];
    double r = u.rho[c], rh = uh.rho[c];
    double dl = u.w[cell.left_face] - uh.w[cell.left_face], dr = u.w[cell.right_face] - uh.w[cell.right_face];
    a[c] = law.potential_d1(r) - law.potential_d1(rh) - law.potential_d2(rh) * (r - rh) + eps2 * (dl * dl + dr * dr) / 4.0;
    drho[c] = r - rh;
  }
  for (std::size_t f = 0; f < grid.face_count(); ++f)
    b[f] = grid.face_area_density(f, drho) * (u.w[f] - uh.w[f]);
  return c_inner(grid, dtau_uh.rho, dtau_uh.w, a, b);
}

/// Difference quotient in tau of snapshot k: central inside, one-sided at the ends.
inline NetworkState time_derivative(const std::vector<NetworkState>& snaps, std::size_t k) {
  if (snaps.size() < 2) throw std::invalid_argument("time derivative needs at least two snapshots");
  std::size_t lo = k == 0 ? 0 : k - 1, hi = k + 1 == snaps.size() ? k : k + 1;
  double dt = snaps[hi].tau - snaps[lo].tau;
  NetworkState d;
  d.tau = snaps[k].tau;
  for (std::size_t c = 0; c < snaps[k].rho.size(); ++c) d.rho.push_back((snaps[hi].rho[c] - snaps[lo].rho[c]) / dt);
  for (std::size_t f = 0; f < snaps[k].w.size(); ++f) d.w.push_back((snaps[hi].w[f] - snaps[lo].w[f]) / dt);
  return d;
}

struct ResidualField {
  double tau = 0.0;
  std::vector<double> e1; // mass residual per cell (identically zero)
  std::vector<double> e2; // momentum residual per face
};

/// Residual of the perturbed trajectory u_hat (parameters of grid_hat) in the
/// unperturbed equations (parameters of grid):
///   e2 = (eps^2 - eps_hat^2)(dtau w_hat + d_x |w_hat|^2 / 2) + (gamma - gamma_hat)|w_hat| w_hat.
inline std::vector<ResidualField> residual_fields(const NetworkGrid& grid, const NetworkGrid& grid_hat,
                                                  const std::vector<NetworkState>& uhat) {
  if (uhat.size() < 2) throw std::invalid_argument("residual fields need at least two snapshots");
  if (!grid.same_layout(grid_hat)) throw std::invalid_argument("residual fields: grid mismatch");
  const double de2 = grid.epsilon() * grid.epsilon() - grid_hat.epsilon() * grid_hat.epsilon();
  std::vector<ResidualField> out;
  for (std::size_t k = 0; k < uhat.size(); ++k) {
    const auto& s = uhat[k];
    check_layout(grid, s);
    ResidualField r;
    r.tau = s.tau;
    r.e1.assign(grid.cell_count(), 0.0);
    r.e2.resize(grid.face_count());
    NetworkState dt = time_derivative(uhat, k);
    for (std::size_t f = 0; f < grid.face_count(); ++f) {
      const auto& face = grid.faces()[f];
      double wf = s.w[f];
      double kr = face.right_cell != npos ? cell_kinetic(grid, s.w, face.right_cell) : 0.5 * wf * wf;
      double kl = face.left_cell != npos ? cell_kinetic(grid, s.w, face.left_cell) : 0.5 * wf * wf;
      double transport = dt.w[f] + (kr - kl) / face.weight;
      double dgamma = face.friction - grid_hat.faces()[f].friction;
      r.e2[f] = (de2 != 0.0 ? de2 * transport : 0.0) + dgamma * std::abs(wf) * wf;
    }
    out.push_back(std::move(r));
  }
  return out;
}

/// Bound-derived constants of the stability estimate.
struct StabilityConstants {
  double c0 = 0.0;  // lower norm-equivalence constant
  double C0 = 0.0;  // upper norm-equivalence constant
  double cD = 0.0;  // relative-dissipation lower constant
  double C1hat = 0.0, C2hat = 0.0, C3hat = 1.0;
  double c = 0.0;   // growth rate C1hat + C2hat + C3hat
  double P1 = 0.0, P2 = 0.0, P3 = 0.0; // weights of the perturbation functional
  double Cboundary = 0.0;
};

/// Norm-equivalence constants (c0, C0) for the relative energy.
/// Bregman remainder: H(u|u_hat) = int_0^1 (1-s) <H'' v, v> ds, and under the
/// subsonic margin (a/2)(P'' x^2 + rho (eps y)^2) <= <H'' v, v> <= (3a/2)(...),
/// so the remainder lies between 1/4 and 3/4 of P'' x^2 + rho (eps y)^2.
inline std::pair<double, double> c0_constants(const AdmissibleBounds& b, const GasLaw& law) {
  if (!(b.rho_min > 0.0) || b.rho_max < b.rho_min || !(b.area_min > 0.0) || b.area_max < b.area_min)
    throw std::invalid_argument("invalid admissible bounds");
  if (!subsonic_margin_holds(b, law))
    throw std::domain_error("subsonic margin rho P''(rho) >= 4 eps^2 w^2 violated on the admissible set");
  auto ex = density_extremes(b, law);
  double c0 = 0.25 * std::min(ex.d2_min, b.area_min * b.rho_min);
  double C0 = 0.75 * std::max(ex.d2_max, b.area_max * b.rho_max);
  return {c0, C0};
}

/// Lipschitz data of the perturbed solution: sup |dtau rho_hat|, sup |dtau w_hat|.
struct SolutionRates {
  double rho_rate = 0.0;
  double w_rate = 0.0;
};

inline SolutionRates solution_rates(const std::vector<NetworkState>& uhat) {
  SolutionRates r;
  for (std::size_t k = 0; k + 1 < uhat.size(); ++k) {
    double dt = uhat[k + 1].tau - uhat[k].tau;
    for (std::size_t c = 0; c < uhat[k].rho.size(); ++c)
      r.rho_rate = std::max(r.rho_rate, std::abs(uhat[k + 1].rho[c] - uhat[k].rho[c]) / dt);
    for (std::size_t f = 0; f < uhat[k].w.size(); ++f)
      r.w_rate = std::max(r.w_rate, std::abs(uhat[k + 1].w[f] - uhat[k].w[f]) / dt);
  }
  return r;
}

/// Full constant set. `boundary_vertices` counts the vertices with prescribed
/// enthalpy, `edge_ends` all pipe ends in the network.
inline StabilityConstants stability_constants(const AdmissibleBounds& b, const GasLaw& law,
                                              const SolutionRates& rates, double epsilon,
                                              std::size_t boundary_vertices, std::size_t edge_ends) {
  StabilityConstants k;
  std::tie(k.c0, k.C0) = c0_constants(b, law);
  auto ex = density_extremes(b, law);
  const double w = b.w_max, abar = b.area_max, alow = b.area_min;
  k.cD = b.gamma_min * b.area_min * b.rho_min / 16.0;
  k.C1hat = 2.0 * b.gamma_max * w * w * w * (abar / alow) / (b.rho_min * k.c0);
  const double Tr = rates.rho_rate, Tw = rates.w_rate;
  k.C2hat = std::max(Tr * ex.d3_abs_max / 2.0 + epsilon * Tw * abar / 2.0,
                     Tr * abar / 2.0 + epsilon * Tw / 2.0) / k.c0;
  k.C3hat = 1.0;
  k.c = k.C1hat + k.C2hat + k.C3hat;
  k.P1 = w * w * b.eps_max * b.eps_max / (4.0 * k.c0) + ex.d2_max * ex.d2_max / (2.0 * k.c0 * alow);
  k.P2 = w * w * abar / (2.0 * k.c0);
  k.P3 = (2.0 / 3.0) / std::sqrt(3.0 * k.cD) * std::pow(abar * b.rho_max, 1.5);
  k.Cboundary = std::max(2.0 * abar * b.rho_max * w * std::sqrt(static_cast<double>(boundary_vertices)),
                         w * w * w * abar * b.rho_max * static_cast<double>(edge_ends));
  return k;
}

/// C1 ||e1||^2 + C2 ||e2||^2 + C3 ||e2||_{3/2}^{3/2}.
inline double perturbation_functional(const NetworkGrid& grid, const ResidualField& e, const StabilityConstants& k) {
  double n1 = l2_sq_cells(grid, e.e1), n2 = 0.0, n32 = 0.0;
  for (std::size_t f = 0; f < grid.face_count(); ++f) {
    double wt = grid.faces()[f].weight, v = std::abs(e.e2[f]);
    n2 += wt * v * v;
    n32 += wt * std::pow(v, 1.5);
  }
  return k.P1 * n1 + k.P2 * n2 + k.P3 * n32;
}

/// C_boundary (|h - h_hat|_boundary + |eps^2 - eps_hat^2|) at time tau, with the
/// root-sum-square over boundary vertices.
inline double boundary_perturbation(const NetworkGrid& grid, const BoundaryData& h, const BoundaryData& h_hat,
                                    double epsilon, double epsilon_hat, double Cboundary, double tau) {
  double sq = 0.0;
  for (std::size_t v : grid.vertex_class().boundary) {
    auto a = h.find(v), b = h_hat.find(v);
    if (a == h.end() || b == h_hat.end())
      throw BoundaryDataError("missing boundary enthalpy at boundary vertex '" + grid.topology().vertices()[v] + "'");
    double d = a->second(tau) - b->second(tau);
    sq += d * d;
  }
  return Cboundary * (std::sqrt(sq) + std::abs(epsilon * epsilon - epsilon_hat * epsilon_hat));
}

/// Per-step power-balance residuals H^{n+1} - H^n + dt D - dt Phi (stage values).
inline std::vector<double> power_balance_residual(const Trajectory& t) {
  std::vector<double> r;
  for (std::size_t n = 0; n < t.steps.size(); ++n) {
    const auto& s = t.steps[n];
    r.push_back(t.energy[n + 1] - t.energy[n] + s.dt * s.stage.dissipation - s.dt * s.stage.boundary_flux);
  }
  return r;
}

/// Energy trace: snapshot 0 reports D and flux at the initial state, later
/// snapshots the stage values of the step that produced them.
inline std::vector<EnergyReport> energy_trace(const NetworkGrid& grid, const Trajectory& t,
                                              const BoundaryData& boundary) {
  std::vector<EnergyReport> out;
  auto res = power_balance_residual(t);
  for (std::size_t k = 0; k < t.snapshots.size(); ++k) {
    EnergyReport e;
    e.tau = t.snapshots[k].tau;
    e.H = t.energy[k];
    if (k == 0) {
      e.D = dissipation(grid, t.snapshots[0]);
      e.flux = boundary_flux(grid, t.snapshots[0], boundary);
    } else {
      e.D = t.steps[k - 1].stage.dissipation;
      e.flux = t.steps[k - 1].stage.boundary_flux;
      e.residual = res[k - 1];
    }
    out.push_back(e);
  }
  return out;
}

struct GronwallInput {
  const NetworkGrid* grid = nullptr;     // unperturbed parameters
  const GasLaw* law = nullptr;
  const std::vector<NetworkState>* u = nullptr;
  const std::vector<NetworkState>* uhat = nullptr;
  std::vector<double> perturbation;          // P(e_hat) per snapshot
  std::vector<double> boundary_perturbation; // P_boundary per snapshot
  StabilityConstants constants;
  std::optional<AdmissibleBounds> bounds;    // snapshots outside are excluded
  std::optional<double> initial_distance_sq; // replaces ||u(0) - u_hat(0)||_C^2 on the right
};

struct GronwallResult {
  bool holds = true;
  double min_slack = INFINITY;
  std::size_t excluded = 0;
  std::vector<RelativeReport> trace;
  std::vector<std::string> warnings;
};

/// Checks c0 ||du||^2(tau) + int e^{c(tau-s)} D(u|u_hat) <= C0 e^{c tau} ||du(0)||^2
///   + int e^{c(tau-s)} (P(e) + P_boundary) at every snapshot (trapezoidal integrals).
inline GronwallResult gronwall_monitor(const GronwallInput& in) {
  const auto& grid = *in.grid;
  const auto& u = *in.u;
  const auto& uh = *in.uhat;
  if (u.size() != uh.size() || u.empty()) throw std::invalid_argument("gronwall monitor: trajectories differ in length");
  if (in.perturbation.size() != u.size() || in.boundary_perturbation.size() != u.size())
    throw std::invalid_argument("gronwall monitor: perturbation series length mismatch");
  const auto& k = in.constants;
  GronwallResult out;
  double d0 = in.initial_distance_sq ? *in.initial_distance_sq : c_distance_sq(grid, u[0], uh[0]);
  double int_d = 0.0, int_p = 0.0, prev_d = 0.0, prev_p = 0.0;
  for (std::size_t n = 0; n < u.size(); ++n) {
    if (std::abs(u[n].tau - uh[n].tau) > 1e-9 * std::max(1.0, std::abs(u[n].tau)))
      throw std::invalid_argument("gronwall monitor: snapshot times differ");
    RelativeReport r;
    r.tau = u[n].tau;
    r.distance_sq = c_distance_sq(grid, u[n], uh[n]);
    r.relative_energy = relative_energy(grid, u[n], uh[n], *in.law);
    r.relative_dissipation = relative_dissipation(grid, u[n], uh[n]);
    r.perturbation = in.perturbation[n];
    r.boundary_perturbation = in.boundary_perturbation[n];
    double p = r.perturbation + r.boundary_perturbation;
    if (n > 0) {
      double h = u[n].tau - u[n - 1].tau, grow = std::exp(k.c * h);
      int_d = grow * int_d + 0.5 * h * (grow * prev_d + r.relative_dissipation);
      int_p = grow * int_p + 0.5 * h * (grow * prev_p + p);
    }
    prev_d = r.relative_dissipation;
    prev_p = p;
    r.lhs = k.c0 * r.distance_sq + int_d;
    r.rhs = k.C0 * std::exp(k.c * r.tau) * d0 + int_p;
    r.slack = r.rhs - r.lhs;
    if (in.bounds) {
      auto vu = admissibility_violation(grid, u[n], *in.bounds);
      auto vh = admissibility_violation(grid, uh[n], *in.bounds);
      if (vu || vh) {
        r.admissible = false;
        ++out.excluded;
        out.warnings.push_back("tau=" + format_double(r.tau) + " excluded: " + (vu ? *vu : *vh));
      }
    }
    if (r.admissible) {
      out.min_slack = std::min(out.min_slack, r.slack);
      if (r.slack < 0.0) out.holds = false;
    }
    out.trace.push_back(r);
  }
  return out;
}

} // namespace gasnet
