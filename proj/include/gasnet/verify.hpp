#pragma once

// Invariant checks on random admissible states and on computed trajectories.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "gasnet/energy.hpp"
#include "gasnet/solver.hpp"

namespace gasnet {

inline NetworkState random_admissible_state(const NetworkGrid& grid, const AdmissibleBounds& b, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> r(b.rho_min, b.rho_max), w(-b.w_max, b.w_max);
  NetworkState s;
  s.rho.resize(grid.cell_count());
  s.w.resize(grid.face_count());
  for (double& v : s.rho) v = r(rng);
  for (double& v : s.w) v = w(rng);
  s.junction_h.assign(grid.junction_count(), 0.0);
  return s;
}

/// Bounds around a state: densities widened by 20 %, the largest velocity the
/// subsonic margin allows (capped at 1), friction and area from the grid.
inline AdmissibleBounds default_bounds(const NetworkGrid& grid, const GasLaw& law, const NetworkState& s) {
  AdmissibleBounds b;
  auto [lo, hi] = std::minmax_element(s.rho.begin(), s.rho.end());
  b.rho_min = *lo / 1.2;
  b.rho_max = *hi * 1.2;
  b.eps_max = grid.epsilon();
  b.area_min = b.gamma_min = INFINITY;
  b.area_max = b.gamma_max = 0.0;
  for (const auto& c : grid.cells()) {
    b.area_min = std::min(b.area_min, c.area);
    b.area_max = std::max(b.area_max, c.area);
  }
  for (const auto& f : grid.faces()) {
    b.gamma_min = std::min(b.gamma_min, f.friction);
    b.gamma_max = std::max(b.gamma_max, f.friction);
  }
  double margin = INFINITY;
  for_each_density_sample(b, [&](double r) { margin = std::min(margin, r * law.potential_d2(r)); });
  b.w_max = b.eps_max > 0.0 ? std::min(1.0, 0.95 * std::sqrt(margin) / (2.0 * b.eps_max)) : 1.0;
  for (const auto& c : grid.cells()) b.gz_max = std::max(b.gz_max, std::abs(grid.gravity() * c.elevation));
  return b;
}

struct StructureCheck {
  double max_skew = 0.0;     // max |<J z, z>| / ||z||^2
  double max_asymmetry = 0.0; // max |J + J^T| entry
  bool c_diagonal_positive = true;
  bool r_nonnegative = true;
  std::size_t samples = 0;
};

inline StructureCheck check_structure(const NetworkGrid& grid, const GasLaw& law, const AdmissibleBounds& b,
                                      std::size_t samples, std::mt19937_64& rng) {
  StructureCheck out;
  out.samples = samples;
  for (std::size_t k = 0; k < samples; ++k) {
    auto s = random_admissible_state(grid, b, rng);
    auto ops = assemble(grid, s);
    auto z = costate(grid, s, law);
    Eigen::VectorXd zv = stack(z.h, z.m);
    out.max_skew = std::max(out.max_skew, std::abs(zv.dot(ops.J * zv)) / zv.squaredNorm());
    SparseMatrix sum = SparseMatrix(ops.J.transpose()) + ops.J;
    for (int c = 0; c < sum.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(sum, c); it; ++it)
        out.max_asymmetry = std::max(out.max_asymmetry, std::abs(it.value()));
    for (int c = 0; c < ops.C.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(ops.C, c); it; ++it)
        if ((it.row() != it.col() && it.value() != 0.0) || (it.row() == it.col() && !(it.value() > 0.0)))
          out.c_diagonal_positive = false;
    if (ops.C.nonZeros() < ops.C.rows()) out.c_diagonal_positive = false;
    for (int c = 0; c < ops.R.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(ops.R, c); it; ++it)
        if (it.value() < 0.0) out.r_nonnegative = false;
  }
  return out;
}

struct PairCheck {
  std::size_t samples = 0;
  std::size_t violations = 0;
  double worst = INFINITY; // smallest margin seen (negative on violation)
};

/// c0 ||u - u_hat||_C^2 <= H(u|u_hat) <= C0 ||u - u_hat||_C^2.
inline PairCheck check_sandwich(const NetworkGrid& grid, const GasLaw& law, const AdmissibleBounds& b,
                                std::size_t samples, std::mt19937_64& rng) {
  auto [c0, C0] = c0_constants(b, law);
  PairCheck out;
  out.samples = samples;
  for (std::size_t k = 0; k < samples; ++k) {
    auto u = random_admissible_state(grid, b, rng), uh = random_admissible_state(grid, b, rng);
    double d = c_distance_sq(grid, u, uh), H = relative_energy(grid, u, uh, law);
    double m = std::min(H - c0 * d, C0 * d - H) / d;
    out.worst = std::min(out.worst, m);
    if (m < 0.0) ++out.violations;
  }
  return out;
}

/// D(u|u_hat) >= c_D ||w - w_hat||_{L3}^3 with c_D = gamma_min a_min rho_min / 16.
inline PairCheck check_relative_dissipation(const NetworkGrid& grid, const AdmissibleBounds& b, std::size_t samples,
                                            std::mt19937_64& rng) {
  const double cD = b.gamma_min * b.area_min * b.rho_min / 16.0;
  PairCheck out;
  out.samples = samples;
  for (std::size_t k = 0; k < samples; ++k) {
    auto u = random_admissible_state(grid, b, rng), uh = random_admissible_state(grid, b, rng);
    std::vector<double> dw(grid.face_count());
    for (std::size_t f = 0; f < dw.size(); ++f) dw[f] = u.w[f] - uh.w[f];
    double l3 = l3_cubed(grid, dw);
    double m = (relative_dissipation(grid, u, uh) - cD * l3) / l3;
    out.worst = std::min(out.worst, m);
    if (m < 0.0) ++out.violations;
  }
  return out;
}

struct TrajectoryCheck {
  double max_balance = 0.0;      // max |residual| over steps
  double max_balance_signed = -INFINITY;
  double max_junction_mass = 0.0;
  double max_junction_energy = 0.0;
};

inline TrajectoryCheck check_trajectory(const Trajectory& t) {
  TrajectoryCheck out;
  for (double r : power_balance_residual(t)) {
    out.max_balance = std::max(out.max_balance, std::abs(r));
    out.max_balance_signed = std::max(out.max_balance_signed, r);
  }
  for (const auto& s : t.steps) {
    for (double v : s.stage.junction_mass) out.max_junction_mass = std::max(out.max_junction_mass, std::abs(v));
    for (double v : s.stage.junction_energy) out.max_junction_energy = std::max(out.max_junction_energy, std::abs(v));
  }
  return out;
}

/// Central-difference error of the co-state against hessian_apply along a
/// random direction, for step sizes h and h/2; returns the error ratio.
inline double hessian_fd_ratio(const NetworkGrid& grid, const GasLaw& law, const NetworkState& s,
                               const NetworkState& dir, double h) {
  auto err = [&](double step) {
    NetworkState p = s, m = s;
    for (std::size_t c = 0; c < s.rho.size(); ++c) {
      p.rho[c] += step * dir.rho[c];
      m.rho[c] -= step * dir.rho[c];
    }
    for (std::size_t f = 0; f < s.w.size(); ++f) {
      p.w[f] += step * dir.w[f];
      m.w[f] -= step * dir.w[f];
    }
    auto zp = costate(grid, p, law), zm = costate(grid, m, law);
    auto g = hessian_apply(grid, s, dir, law);
    double e = 0.0;
    for (std::size_t c = 0; c < zp.h.size(); ++c) e += std::pow((zp.h[c] - zm.h[c]) / (2 * step) - g.h[c], 2);
    for (std::size_t f = 0; f < zp.m.size(); ++f) e += std::pow((zp.m[f] - zm.m[f]) / (2 * step) - g.m[f], 2);
    return std::sqrt(e);
  };
  return err(h) / err(h / 2);
}

} // namespace gasnet
