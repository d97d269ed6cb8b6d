#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <boost/math/tools/roots.hpp>

#include "gasnet/discretization.hpp"

namespace gasnet {

enum class Scheme { implicit_midpoint, backward_euler };

inline std::string to_string(Scheme s) {
  return s == Scheme::implicit_midpoint ? "midpoint" : "backward_euler";
}

inline Scheme parse_scheme(const std::string& name) {
  if (name == "midpoint" || name == "implicit_midpoint") return Scheme::implicit_midpoint;
  if (name == "backward_euler" || name == "euler" || name == "be") return Scheme::backward_euler;
  throw std::invalid_argument("unknown scheme '" + name + "'");
}

struct SolverConfig {
  double dt = 0.01;
  double final_time = 1.0;
  Scheme scheme = Scheme::implicit_midpoint;
  double newton_tol = 1e-11;
  int max_iterations = 50;
  bool parabolic = false;
  bool parabolic_gravity = true; // keep g z in the limit enthalpy
  std::optional<AdmissibleBounds> bounds;

  void validate() const {
    if (!(dt > 0.0)) throw std::invalid_argument("solver: dt must be positive");
    if (!(final_time >= 0.0)) throw std::invalid_argument("solver: final time must be non-negative");
    if (!(newton_tol > 0.0)) throw std::invalid_argument("solver: Newton tolerance must be positive");
    if (max_iterations < 1) throw std::invalid_argument("solver: max iterations must be positive");
  }
};

class StepFailure : public std::runtime_error {
public:
  StepFailure(const std::string& what, double tau, int iterations, double residual)
      : std::runtime_error(what), tau(tau), iterations(iterations), residual(residual) {}
  double tau;
  int iterations;
  double residual;
};

/// Quantities evaluated at the stage state of one step.
struct StageInfo {
  int iterations = 0;
  double residual = 0.0;
  double dissipation = 0.0;
  double boundary_flux = 0.0;
  std::vector<double> junction_mass;   // sum_e n^e m^e(v) per junction
  std::vector<double> junction_energy; // sum_e n^e h^e(v) m^e(v) per junction
};

struct StepResult {
  NetworkState next;
  StageInfo stage;
};

namespace detail {

using Triplet = Eigen::Triplet<double>;

/// Damped Newton iteration on a row-scaled system. `eval(x, F, J)` fills the
/// scaled residual and, if J is non-null, the Jacobian triplets; it returns
/// false when x leaves the admissible set (non-positive density).
template <class Eval>
std::pair<int, double> newton(Eigen::VectorXd& x, Eval&& eval, double tol, int max_it, double tau) {
  const auto n = x.size();
  Eigen::VectorXd F(n), Ftrial(n);
  std::vector<Triplet> trip;
  if (!eval(x, F, &trip)) throw StepFailure("initial Newton iterate not admissible", tau, 0, INFINITY);
  double res = F.lpNorm<Eigen::Infinity>();
  Eigen::SparseMatrix<double> Jm(n, n);
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  bool analysed = false;
  int it = 0;
  while (res > tol) {
    if (it >= max_it) {
      std::ostringstream msg;
      msg << "Newton did not converge at tau=" << tau << " after " << it
          << " iterations (residual " << res << ")";
      throw StepFailure(msg.str(), tau, it, res);
    }
    ++it;
    Jm.setFromTriplets(trip.begin(), trip.end());
    if (!analysed) {
      lu.analyzePattern(Jm);
      analysed = true;
    }
    lu.factorize(Jm);
    if (lu.info() != Eigen::Success)
      throw StepFailure("singular Newton matrix at tau=" + std::to_string(tau), tau, it, res);
    Eigen::VectorXd dx = lu.solve(-F);
    double norm0 = F.norm();
    double lambda = 1.0;
    Eigen::VectorXd xt;
    bool accepted = false;
    for (int k = 0; k < 30; ++k, lambda *= 0.5) {
      xt = x + lambda * dx;
      trip.clear();
      if (!eval(xt, Ftrial, &trip)) continue;
      if (Ftrial.norm() <= (1.0 - 1e-4 * lambda) * norm0 || Ftrial.lpNorm<Eigen::Infinity>() <= tol) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // take the full step if it is admissible; stagnation is caught by max_it
      xt = x + dx;
      trip.clear();
      if (!eval(xt, Ftrial, &trip))
        throw StepFailure("Newton line search failed at tau=" + std::to_string(tau), tau, it, res);
    }
    double step = (xt - x).lpNorm<Eigen::Infinity>();
    x = xt;
    F = Ftrial;
    res = F.lpNorm<Eigen::Infinity>();
    // corrections at rounding level cannot reduce the residual further (the
    // limit velocity sqrt(|s|) amplifies rounding where the gradient vanishes)
    if (step <= 8.0 * std::numeric_limits<double>::epsilon() * (1.0 + x.lpNorm<Eigen::Infinity>()) &&
        res <= 1e3 * tol)
      break;
  }
  return {it, res};
}

inline bool positive(const Eigen::VectorXd& x, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k)
    if (!(x[static_cast<Eigen::Index>(k)] > 0.0) || !std::isfinite(x[static_cast<Eigen::Index>(k)]))
      return false;
  return true;
}

inline double sgn(double v) { return (v > 0.0) - (v < 0.0); }

} // namespace detail

/// Mean enthalpy of the cells adjacent to each junction.
inline std::vector<double> junction_guess(const NetworkGrid& grid, const NetworkState& s,
                                          const GasLaw& law) {
  std::vector<double> out(grid.junction_count(), 0.0);
  CoState z = costate(grid, s, law);
  for (std::size_t k = 0; k < grid.junction_count(); ++k) {
    const auto& faces = grid.port_faces(grid.junction_vertex(k));
    for (std::size_t f : faces) {
      const auto& face = grid.faces()[f];
      out[k] += z.h[face.left_cell != npos ? face.left_cell : face.right_cell];
    }
    out[k] /= static_cast<double>(faces.size());
  }
  return out;
}

/// Stage-state diagnostics: dissipation, boundary flux and junction sums.
inline StageInfo stage_diagnostics(const NetworkGrid& grid, const std::vector<double>& rho,
                                   const std::vector<double>& w, const std::vector<double>& ports) {
  StageInfo info;
  info.junction_mass.assign(grid.junction_count(), 0.0);
  info.junction_energy.assign(grid.junction_count(), 0.0);
  for (std::size_t f = 0; f < grid.face_count(); ++f) {
    const auto& face = grid.faces()[f];
    double ar = grid.face_area_density(f, rho);
    double m = ar * w[f];
    info.dissipation += face.weight * face.friction * ar * std::pow(std::abs(w[f]), 3);
    if (face.vertex == npos) continue;
    std::size_t k = grid.junction_index(face.vertex);
    if (k == npos) {
      info.boundary_flux += -face.incidence * ports[face.vertex] * m;
    } else {
      info.junction_mass[k] += face.incidence * m;
      info.junction_energy[k] += face.incidence * ports[face.vertex] * m;
    }
  }
  return info;
}

/// One step of the hyperbolic system. The stage state U solves
///   C (U - u^n) / (theta dt) + (J + R(U)) z(U) - B h_ports - W f = 0
/// together with the junction rows; theta = 1/2 gives the implicit midpoint
/// rule (u^{n+1} = 2U - u^n), theta = 1 backward Euler.
inline StepResult step_hyperbolic(const NetworkGrid& grid, const GasLaw& law, const NetworkState& state,
                                  double dt, const BoundaryData& boundary, const SolverConfig& cfg,
                                  const Forcing* forcing = nullptr) {
  const double eps2 = grid.epsilon() * grid.epsilon();
  if (!(grid.epsilon() > 0.0))
    throw std::invalid_argument("hyperbolic step needs epsilon > 0; use the parabolic solver");
  if (!(dt > 0.0)) throw std::invalid_argument("hyperbolic step: dt must be positive");
  require_positive_density(grid, state);
  const double theta = cfg.scheme == Scheme::implicit_midpoint ? 0.5 : 1.0;
  const double tdt = theta * dt;
  const double tau_stage = state.tau + tdt;
  const std::size_t nc = grid.cell_count(), nf = grid.face_count(), nj = grid.junction_count();
  const double g = grid.gravity();

  auto ports = port_values(grid, boundary, tau_stage, {});
  std::vector<double> f_rho(nc, 0.0), f_w(nf, 0.0);
  if (forcing && forcing->mass)
    for (std::size_t c = 0; c < nc; ++c)
      f_rho[c] = forcing->mass(grid.cells()[c].edge, grid.cells()[c].x, tau_stage);
  if (forcing && forcing->momentum)
    for (std::size_t f = 0; f < nf; ++f)
      f_w[f] = forcing->momentum(grid.faces()[f].edge, grid.faces()[f].x, tau_stage);

  std::vector<double> rho(nc), w(nf), h(nc), d2(nc), ar(nf);
  auto unpack = [&](const Eigen::VectorXd& x) {
    for (std::size_t c = 0; c < nc; ++c) rho[c] = x[static_cast<Eigen::Index>(c)];
    for (std::size_t f = 0; f < nf; ++f) w[f] = x[static_cast<Eigen::Index>(nc + f)];
    for (std::size_t k = 0; k < nj; ++k) ports[grid.junction_vertex(k)] = x[static_cast<Eigen::Index>(nc + nf + k)];
  };

  auto eval = [&](const Eigen::VectorXd& x, Eigen::VectorXd& F, std::vector<detail::Triplet>* jac) {
    if (!detail::positive(x, nc)) return false;
    unpack(x);
    for (std::size_t f = 0; f < nf; ++f)
      if (!std::isfinite(w[f])) return false;
    for (std::size_t c = 0; c < nc; ++c) {
      h[c] = eps2 * cell_kinetic(grid, w, c) + law.potential_d1(rho[c]) + g * grid.cells()[c].elevation;
      d2[c] = law.potential_d2(rho[c]);
    }
    for (std::size_t f = 0; f < nf; ++f) ar[f] = grid.face_area_density(f, rho);

    // mass rows
    for (std::size_t c = 0; c < nc; ++c) {
      const auto& cell = grid.cells()[c];
      const double wc = grid.cell_weight(c), sc = tdt / wc;
      const std::size_t fl = cell.left_face, fr = cell.right_face;
      F[static_cast<Eigen::Index>(c)] =
          sc * (wc * (rho[c] - state.rho[c]) / tdt + ar[fr] * w[fr] - ar[fl] * w[fl] - cell.dx * f_rho[c]);
      if (!jac) continue;
      jac->emplace_back(c, c, 1.0);
      for (auto [f, sign] : {std::pair{fr, 1.0}, std::pair{fl, -1.0}}) {
        const auto& face = grid.faces()[f];
        jac->emplace_back(c, nc + f, sc * sign * ar[f]);
        for (std::size_t adj : {face.left_cell, face.right_cell})
          if (adj != npos) jac->emplace_back(c, adj, sc * sign * grid.face_share(f, adj) * w[f]);
      }
    }
    // momentum rows
    for (std::size_t f = 0; f < nf; ++f) {
      const auto& face = grid.faces()[f];
      const double wt = face.weight, sf = tdt / wt;
      const double hr = face.right_cell != npos ? h[face.right_cell] : ports[face.vertex];
      const double hl = face.left_cell != npos ? h[face.left_cell] : ports[face.vertex];
      const std::size_t row = nc + f;
      F[static_cast<Eigen::Index>(row)] =
          sf * (eps2 * wt * (w[f] - state.w[f]) / tdt + hr - hl +
                wt * face.friction * std::abs(w[f]) * w[f] - wt * f_w[f]);
      if (!jac) continue;
      jac->emplace_back(row, row, eps2 + sf * 2.0 * wt * face.friction * std::abs(w[f]));
      for (auto [c, sign] : {std::pair{face.right_cell, 1.0}, std::pair{face.left_cell, -1.0}}) {
        if (c == npos) {
          std::size_t k = grid.junction_index(face.vertex);
          if (k != npos) jac->emplace_back(row, nc + nf + k, sf * sign);
          continue;
        }
        const auto& cell = grid.cells()[c];
        jac->emplace_back(row, c, sf * sign * d2[c]);
        jac->emplace_back(row, nc + cell.left_face, sf * sign * 0.5 * eps2 * w[cell.left_face]);
        jac->emplace_back(row, nc + cell.right_face, sf * sign * 0.5 * eps2 * w[cell.right_face]);
      }
    }
    // junction rows: sum_e n^e m^e(v) = 0
    for (std::size_t k = 0; k < nj; ++k) {
      const std::size_t row = nc + nf + k;
      double sum = 0.0;
      for (std::size_t f : grid.port_faces(grid.junction_vertex(k))) {
        const auto& face = grid.faces()[f];
        const double n = face.incidence;
        sum += n * ar[f] * w[f];
        if (!jac) continue;
        jac->emplace_back(row, nc + f, n * ar[f]);
        for (std::size_t adj : {face.left_cell, face.right_cell})
          if (adj != npos) jac->emplace_back(row, adj, n * grid.face_share(f, adj) * w[f]);
      }
      F[static_cast<Eigen::Index>(row)] = sum;
    }
    return true;
  };

  Eigen::VectorXd x(static_cast<Eigen::Index>(nc + nf + nj));
  for (std::size_t c = 0; c < nc; ++c) x[static_cast<Eigen::Index>(c)] = state.rho[c];
  for (std::size_t f = 0; f < nf; ++f) x[static_cast<Eigen::Index>(nc + f)] = state.w[f];
  std::vector<double> jguess = state.junction_h.size() == nj ? state.junction_h : junction_guess(grid, state, law);
  for (std::size_t k = 0; k < nj; ++k) x[static_cast<Eigen::Index>(nc + nf + k)] = jguess[k];

  auto [iterations, residual] = detail::newton(x, eval, cfg.newton_tol, cfg.max_iterations, state.tau);
  unpack(x);

  StepResult out;
  out.stage = stage_diagnostics(grid, rho, w, ports);
  out.stage.iterations = iterations;
  out.stage.residual = residual;
  out.next.tau = state.tau + dt;
  out.next.rho.resize(nc);
  out.next.w.resize(nf);
  for (std::size_t c = 0; c < nc; ++c) out.next.rho[c] = state.rho[c] + (rho[c] - state.rho[c]) / theta;
  for (std::size_t f = 0; f < nf; ++f) out.next.w[f] = state.w[f] + (w[f] - state.w[f]) / theta;
  out.next.junction_h.resize(nj);
  for (std::size_t k = 0; k < nj; ++k) out.next.junction_h[k] = ports[grid.junction_vertex(k)];
  for (double r : out.next.rho)
    if (!(r > 0.0))
      throw StepFailure("density lost positivity at tau=" + std::to_string(out.next.tau), out.next.tau,
                        iterations, residual);
  return out;
}

/// Enthalpy P'(rho) (+ g z) at the cells, as used by the limit problem.
inline std::vector<double> parabolic_enthalpy(const NetworkGrid& grid, const GasLaw& law,
                                              std::span<const double> rho, bool gravity = true) {
  std::vector<double> h(grid.cell_count());
  const double g = gravity ? grid.gravity() : 0.0;
  for (std::size_t c = 0; c < h.size(); ++c)
    h[c] = law.potential_d1(rho[c]) + g * grid.cells()[c].elevation;
  return h;
}

/// Discrete gradient s_f = (h_right - h_left) / wt_f with port values at the
/// pipe ends. A NaN port copies the gradient of the neighbouring inner face.
inline std::vector<double> parabolic_gradient(const NetworkGrid& grid, std::span<const double> h,
                                              std::span<const double> ports) {
  std::vector<double> s(grid.face_count());
  for (std::size_t f = 0; f < s.size(); ++f) {
    const auto& face = grid.faces()[f];
    if (face.vertex != npos && std::isnan(ports[face.vertex])) continue;
    double hr = face.right_cell != npos ? h[face.right_cell] : ports[face.vertex];
    double hl = face.left_cell != npos ? h[face.left_cell] : ports[face.vertex];
    s[f] = (hr - hl) / face.weight;
  }
  for (std::size_t f = 0; f < s.size(); ++f) {
    const auto& face = grid.faces()[f];
    if (face.vertex == npos || !std::isnan(ports[face.vertex])) continue;
    s[f] = s[face.left_cell == npos ? f + 1 : f - 1];
  }
  return s;
}

/// Solves gamma |w| w = -s at a face.
inline double recover_velocity(double s, double gamma) {
  if (s == 0.0) return 0.0;
  if (!(gamma > 0.0)) throw std::domain_error("velocity recovery needs positive friction");
  return -detail::sgn(s) * std::sqrt(std::abs(s) / gamma);
}

/// Limit velocity at every face. `ports` holds enthalpies per vertex; an
/// empty span or NaN entries fall back to the neighbouring inner gradient.
inline std::vector<double> velocity_recovery_parabolic(const NetworkGrid& grid, const GasLaw& law,
                                                       std::span<const double> rho,
                                                       std::span<const double> ports = {},
                                                       bool gravity = true) {
  std::vector<double> nan_ports;
  if (ports.empty()) {
    nan_ports.assign(grid.topology().vertex_count(), std::numeric_limits<double>::quiet_NaN());
    ports = nan_ports;
  }
  auto s = parabolic_gradient(grid, parabolic_enthalpy(grid, law, rho, gravity), ports);
  std::vector<double> w(s.size());
  for (std::size_t f = 0; f < s.size(); ++f) w[f] = recover_velocity(s[f], grid.faces()[f].friction);
  return w;
}

/// Junction enthalpies balancing the limit mass fluxes for a given density.
/// Each junction decouples: the flux sum is decreasing in h^v and changes
/// sign between the smallest and largest adjacent cell enthalpy.
inline std::vector<double> solve_junction_enthalpies(const NetworkGrid& grid, const GasLaw& law,
                                                     std::span<const double> rho, bool gravity = true) {
  auto h = parabolic_enthalpy(grid, law, rho, gravity);
  std::vector<double> out(grid.junction_count());
  for (std::size_t k = 0; k < out.size(); ++k) {
    const auto& faces = grid.port_faces(grid.junction_vertex(k));
    auto flux = [&](double hv) {
      double sum = 0.0;
      for (std::size_t f : faces) {
        const auto& face = grid.faces()[f];
        double hr = face.right_cell != npos ? h[face.right_cell] : hv;
        double hl = face.left_cell != npos ? h[face.left_cell] : hv;
        double wf = recover_velocity((hr - hl) / face.weight, face.friction);
        sum += face.incidence * grid.face_area_density(f, rho) * wf;
      }
      return sum;
    };
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t f : faces) {
      const auto& face = grid.faces()[f];
      double hc = h[face.left_cell != npos ? face.left_cell : face.right_cell];
      lo = std::min(lo, hc);
      hi = std::max(hi, hc);
    }
    if (hi - lo <= 0.0) {
      out[k] = lo;
      continue;
    }
    double flo = flux(lo), fhi = flux(hi);
    if (flo == 0.0) { out[k] = lo; continue; }
    if (fhi == 0.0) { out[k] = hi; continue; }
    std::uintmax_t it = 200;
    auto r = boost::math::tools::toms748_solve(flux, lo, hi, flo, fhi,
                                               boost::math::tools::eps_tolerance<double>(52), it);
    out[k] = 0.5 * (r.first + r.second);
  }
  return out;
}

/// Backward-Euler step of the limit problem
///   a d rho / d tau + d_x (a rho w(rho)) = 0,  gamma |w| w = -d_x h,
/// with the junction enthalpies as additional unknowns.
inline StepResult step_parabolic(const NetworkGrid& grid, const GasLaw& law, const NetworkState& state,
                                 double dt, const BoundaryData& boundary, const SolverConfig& cfg,
                                 const Forcing* forcing = nullptr) {
  if (!(dt > 0.0)) throw std::invalid_argument("parabolic step: dt must be positive");
  require_positive_density(grid, state);
  const std::size_t nc = grid.cell_count(), nf = grid.face_count(), nj = grid.junction_count();
  const double g = cfg.parabolic_gravity ? grid.gravity() : 0.0;
  const double tau_new = state.tau + dt;
  auto ports = port_values(grid, boundary, tau_new, {});
  for (std::size_t f = 0; f < nf; ++f)
    if (!(grid.faces()[f].friction > 0.0))
      throw std::invalid_argument("parabolic limit needs positive friction on every face");
  std::vector<double> f_rho(nc, 0.0);
  if (forcing && forcing->mass)
    for (std::size_t c = 0; c < nc; ++c)
      f_rho[c] = forcing->mass(grid.cells()[c].edge, grid.cells()[c].x, tau_new);

  std::vector<double> rho(nc), h(nc), d2(nc), ar(nf), wv(nf), dwds(nf);
  auto unpack = [&](const Eigen::VectorXd& x) {
    for (std::size_t c = 0; c < nc; ++c) rho[c] = x[static_cast<Eigen::Index>(c)];
    for (std::size_t k = 0; k < nj; ++k) ports[grid.junction_vertex(k)] = x[static_cast<Eigen::Index>(nc + k)];
  };
  auto eval = [&](const Eigen::VectorXd& x, Eigen::VectorXd& F, std::vector<detail::Triplet>* jac) {
    if (!detail::positive(x, nc)) return false;
    unpack(x);
    for (std::size_t c = 0; c < nc; ++c) {
      h[c] = law.potential_d1(rho[c]) + g * grid.cells()[c].elevation;
      d2[c] = law.potential_d2(rho[c]);
    }
    for (std::size_t f = 0; f < nf; ++f) {
      const auto& face = grid.faces()[f];
      double hr = face.right_cell != npos ? h[face.right_cell] : ports[face.vertex];
      double hl = face.left_cell != npos ? h[face.left_cell] : ports[face.vertex];
      double s = (hr - hl) / face.weight;
      wv[f] = recover_velocity(s, face.friction);
      dwds[f] = -0.5 / std::sqrt(face.friction * std::max(std::abs(s), 1e-12));
      ar[f] = grid.face_area_density(f, rho);
    }
    // d m_f / d x for every unknown x touching face f
    auto dm = [&](std::size_t f, double scale, std::size_t row) {
      const auto& face = grid.faces()[f];
      for (auto [c, sign] : {std::pair{face.right_cell, 1.0}, std::pair{face.left_cell, -1.0}}) {
        double ds = sign / face.weight;
        if (c == npos) {
          std::size_t k = grid.junction_index(face.vertex);
          if (k != npos) jac->emplace_back(row, nc + k, scale * ar[f] * dwds[f] * ds);
          continue;
        }
        jac->emplace_back(row, c, scale * (grid.face_share(f, c) * wv[f] + ar[f] * dwds[f] * ds * d2[c]));
      }
    };
    for (std::size_t c = 0; c < nc; ++c) {
      const auto& cell = grid.cells()[c];
      const double wc = grid.cell_weight(c), sc = dt / wc;
      const std::size_t fl = cell.left_face, fr = cell.right_face;
      F[static_cast<Eigen::Index>(c)] =
          sc * (wc * (rho[c] - state.rho[c]) / dt + ar[fr] * wv[fr] - ar[fl] * wv[fl] - cell.dx * f_rho[c]);
      if (!jac) continue;
      jac->emplace_back(c, c, 1.0);
      dm(fr, sc, c);
      dm(fl, -sc, c);
    }
    for (std::size_t k = 0; k < nj; ++k) {
      const std::size_t row = nc + k;
      double sum = 0.0;
      for (std::size_t f : grid.port_faces(grid.junction_vertex(k))) {
        double n = grid.faces()[f].incidence;
        sum += n * ar[f] * wv[f];
        if (jac) dm(f, n, row);
      }
      F[static_cast<Eigen::Index>(row)] = sum;
    }
    return true;
  };

  Eigen::VectorXd x(static_cast<Eigen::Index>(nc + nj));
  for (std::size_t c = 0; c < nc; ++c) x[static_cast<Eigen::Index>(c)] = state.rho[c];
  std::vector<double> jguess = state.junction_h.size() == nj
                                   ? state.junction_h
                                   : solve_junction_enthalpies(grid, law, state.rho, cfg.parabolic_gravity);
  for (std::size_t k = 0; k < nj; ++k) x[static_cast<Eigen::Index>(nc + k)] = jguess[k];

  auto [iterations, residual] = detail::newton(x, eval, cfg.newton_tol, cfg.max_iterations, state.tau);
  Eigen::VectorXd final_residual(x.size());
  eval(x, final_residual, nullptr);

  StepResult out;
  out.next.tau = tau_new;
  out.next.rho = rho;
  out.next.w = wv;
  out.next.junction_h.resize(nj);
  for (std::size_t k = 0; k < nj; ++k) out.next.junction_h[k] = ports[grid.junction_vertex(k)];
  out.stage = stage_diagnostics(grid, rho, wv, ports);
  out.stage.iterations = iterations;
  out.stage.residual = residual;
  return out;
}

/// Returns a description of the first bound violated by s, if any.
inline std::optional<std::string> admissibility_violation(const NetworkGrid& grid, const NetworkState& s,
                                                          const AdmissibleBounds& b) {
  for (std::size_t c = 0; c < s.rho.size(); ++c)
    if (s.rho[c] < b.rho_min || s.rho[c] > b.rho_max) {
      std::ostringstream msg;
      msg << "density " << s.rho[c] << " outside [" << b.rho_min << ", " << b.rho_max << "] on edge '"
          << grid.topology().edges()[grid.cells()[c].edge].name << "'";
      return msg.str();
    }
  for (std::size_t f = 0; f < s.w.size(); ++f)
    if (std::abs(s.w[f]) > b.w_max) {
      std::ostringstream msg;
      msg << "velocity " << s.w[f] << " exceeds " << b.w_max << " on edge '"
          << grid.topology().edges()[grid.faces()[f].edge].name << "'";
      return msg.str();
    }
  return std::nullopt;
}

struct StepRecord {
  double tau = 0.0; // start of the step
  double dt = 0.0;
  StageInfo stage;
};

struct Trajectory {
  std::vector<NetworkState> snapshots;
  std::vector<StepRecord> steps;        // steps[n] leads from snapshot n to n + 1
  std::vector<double> energy;           // H at every snapshot
  std::vector<bool> admissible;         // per snapshot
  std::vector<std::string> warnings;
  bool complete = true;
  std::string failure;
};

/// Advances `initial` to cfg.final_time with fixed steps (the last one
/// shortened if dt does not divide the horizon).
inline Trajectory run(const NetworkGrid& grid, const GasLaw& law, NetworkState initial,
                      const SolverConfig& cfg, const BoundaryData& boundary,
                      const Forcing* forcing = nullptr) {
  cfg.validate();
  validate_boundary(grid, boundary);
  require_positive_density(grid, initial);
  const NetworkGrid energy_grid = cfg.parabolic ? grid.with_epsilon(0.0) : grid;
  if (!cfg.parabolic && initial.junction_h.size() != grid.junction_count())
    initial.junction_h = junction_guess(grid, initial, law);

  Trajectory traj;
  auto record = [&](const NetworkState& s) {
    traj.snapshots.push_back(s);
    traj.energy.push_back(total_energy(energy_grid, s, law));
    bool ok = true;
    if (cfg.bounds) {
      if (auto v = admissibility_violation(grid, s, *cfg.bounds)) {
        ok = false;
        traj.warnings.push_back("tau=" + format_double(s.tau) + ": " + *v);
      }
    }
    traj.admissible.push_back(ok);
  };
  record(initial);

  const double T = cfg.final_time;
  const auto nsteps = static_cast<std::size_t>(std::ceil(T / cfg.dt - 1e-9));
  NetworkState current = std::move(initial);
  for (std::size_t n = 0; n < nsteps; ++n) {
    double t0 = static_cast<double>(n) * cfg.dt;
    current.tau = t0;
    double dt = std::min(cfg.dt, T - t0);
    try {
      StepResult r = cfg.parabolic ? step_parabolic(grid, law, current, dt, boundary, cfg, forcing)
                                   : step_hyperbolic(grid, law, current, dt, boundary, cfg, forcing);
      r.next.tau = n + 1 == nsteps ? T : t0 + dt;
      traj.steps.push_back({t0, dt, std::move(r.stage)});
      current = std::move(r.next);
      record(current);
    } catch (const std::exception& e) {
      traj.complete = false;
      traj.failure = e.what();
      break;
    }
  }
  return traj;
}

} // namespace gasnet
