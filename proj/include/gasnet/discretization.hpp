#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "gasnet/gas_model.hpp"
#include "gasnet/network.hpp"

namespace gasnet {

// Staggered grid on every edge: densities and enthalpies live at the N cell
// centres, velocities and mass fluxes at the N + 1 faces (including the two
// pipe ends). End faces carry half weight, so the face quadrature is the
// trapezoidal rule and the cell quadrature the midpoint rule.
//
// Discrete energy
//   H = sum_c a_c dx [ P(rho_c) + g z_c rho_c + eps^2 rho_c (w_l^2 + w_r^2) / 4 ]
// with w_l, w_r the faces of cell c. Its gradient with respect to the
// weights C = diag(a_c dx, eps^2 wt_f) gives the co-state
//   h_c = eps^2 (w_l^2 + w_r^2) / 4 + P'(rho_c) + g z_c,
//   m_f = (a rho)_f w_f,  (a rho)_f = sum over adjacent cells of (dx / 2 wt_f) a_c rho_c,
// i.e. the two-point average inside a pipe and the adjacent cell value at an end.

struct EdgeGrid {
  std::size_t cells = 0;
  double length = 0.0;
  double dx = 0.0;

  std::size_t faces() const { return cells + 1; }
  double cell_center(std::size_t i) const { return (static_cast<double>(i) + 0.5) * dx; }
  double face(std::size_t j) const { return static_cast<double>(j) * dx; }
  double face_weight(std::size_t j) const { return (j == 0 || j == cells) ? 0.5 * dx : dx; }
};

inline constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

struct NetworkState {
  std::vector<double> rho;        // per global cell
  std::vector<double> w;          // per global face
  std::vector<double> junction_h; // per interior vertex (stage multiplier)
  double tau = 0.0;
};

struct CoState {
  std::vector<double> h; // per global cell
  std::vector<double> m; // per global face
};

/// Enthalpy schedule h(tau) at a boundary vertex.
class Schedule {
public:
  Schedule() = default;

  static Schedule constant(double value) {
    Schedule s;
    s.table_ = Profile::constant(value);
    s.description_ = "constant " + format_double(value);
    return s;
  }

  /// Piecewise linear in tau, constant outside the table.
  static Schedule table(std::vector<double> times, std::vector<double> values) {
    Profile p(times, values);
    Schedule s;
    s.description_ = "table";
    for (std::size_t k = 0; k < times.size(); ++k)
      s.description_ += " " + format_double(times[k]) + ":" + format_double(values[k]);
    s.table_ = std::move(p);
    return s;
  }

  static Schedule function(std::function<double(double)> f, std::string description) {
    Schedule s;
    s.fn_ = std::move(f);
    s.description_ = std::move(description);
    return s;
  }

  double operator()(double tau) const {
    if (fn_) return fn_(tau);
    return table_(tau);
  }

  /// Same schedule plus a constant offset.
  Schedule offset(double delta) const {
    Schedule base = *this;
    Schedule s;
    s.fn_ = [base, delta](double t) { return base(t) + delta; };
    s.description_ = description_ + " + " + format_double(delta);
    return s;
  }

  const std::string& description() const { return description_; }

private:
  Profile table_;
  std::function<double(double)> fn_;
  std::string description_ = "constant 0";
};

/// Vertex index -> enthalpy schedule; required at every boundary vertex.
using BoundaryData = std::map<std::size_t, Schedule>;

class BoundaryDataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Optional source terms f_rho(edge, x, tau), f_w(edge, x, tau) added to the
/// mass and momentum balances.
struct Forcing {
  std::function<double(std::size_t, double, double)> mass;
  std::function<double(std::size_t, double, double)> momentum;
  explicit operator bool() const { return mass || momentum; }
};

class NetworkGrid {
public:
  struct Cell {
    std::size_t edge, local;
    double x, area, elevation, dx;
    std::size_t left_face, right_face;
  };
  struct Face {
    std::size_t edge, local;
    double x, weight, friction;
    std::size_t left_cell, right_cell; // npos at a pipe end
    std::size_t vertex;                // vertex at a pipe end, npos inside
    int incidence;                     // n^e(vertex) at a pipe end
  };

  NetworkGrid(const NetworkTopology& topology, std::size_t cells_per_edge)
      : NetworkGrid(topology, std::vector<std::size_t>(topology.edge_count(), cells_per_edge)) {}

  NetworkGrid(const NetworkTopology& topology, std::vector<std::size_t> cells_per_edge)
      : topology_(topology), classes_(topology.classify()) {
    if (cells_per_edge.size() != topology.edge_count())
      throw std::invalid_argument("grid: one cell count per edge required");
    epsilon_ = topology.edges().front().pipe.epsilon;
    gravity_ = topology.edges().front().pipe.gravity;
    for (const auto& e : topology.edges())
      if (e.pipe.epsilon != epsilon_ || e.pipe.gravity != gravity_)
        throw std::invalid_argument("grid: epsilon and gravity must agree on all edges");

    junction_of_vertex_.assign(topology.vertex_count(), npos);
    for (std::size_t k = 0; k < classes_.interior.size(); ++k)
      junction_of_vertex_[classes_.interior[k]] = k;

    for (std::size_t e = 0; e < topology.edge_count(); ++e) {
      const auto& edge = topology.edges()[e];
      std::size_t n = cells_per_edge[e];
      if (n < 2) throw std::invalid_argument("grid: at least two cells per edge required");
      EdgeGrid g{n, edge.pipe.length, edge.pipe.length / static_cast<double>(n)};
      edges_.push_back(g);
      cell_offset_.push_back(cells_.size());
      face_offset_.push_back(faces_.size());
      std::size_t c0 = cells_.size(), f0 = faces_.size();
      for (std::size_t i = 0; i < n; ++i) {
        double x = g.cell_center(i);
        cells_.push_back({e, i, x, edge.pipe.area(x), edge.pipe.elevation(x), g.dx, f0 + i, f0 + i + 1});
      }
      for (std::size_t j = 0; j <= n; ++j) {
        double x = g.face(j);
        Face f{e, j, x, g.face_weight(j), edge.pipe.friction(x),
               j == 0 ? npos : c0 + j - 1, j == n ? npos : c0 + j, npos, 0};
        if (j == 0) {
          f.vertex = edge.from;
          f.incidence = -1;
        } else if (j == n) {
          f.vertex = edge.to;
          f.incidence = 1;
        }
        faces_.push_back(f);
      }
    }
    for (std::size_t f = 0; f < faces_.size(); ++f)
      if (faces_[f].vertex != npos) port_faces_[faces_[f].vertex].push_back(f);
  }

  /// Cells per edge chosen as round(length / dx), at least 2.
  static NetworkGrid with_target_dx(const NetworkTopology& topology, double dx) {
    if (!(dx > 0.0)) throw std::invalid_argument("grid: target dx must be positive");
    std::vector<std::size_t> n;
    for (const auto& e : topology.edges())
      n.push_back(std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(e.pipe.length / dx))));
    return NetworkGrid(topology, n);
  }

  const NetworkTopology& topology() const { return topology_; }
  const VertexClass& vertex_class() const { return classes_; }
  const std::vector<EdgeGrid>& edge_grids() const { return edges_; }
  const std::vector<Cell>& cells() const { return cells_; }
  const std::vector<Face>& faces() const { return faces_; }
  std::size_t cell_count() const { return cells_.size(); }
  std::size_t face_count() const { return faces_.size(); }
  std::size_t junction_count() const { return classes_.interior.size(); }
  std::size_t cell_offset(std::size_t e) const { return cell_offset_[e]; }
  std::size_t face_offset(std::size_t e) const { return face_offset_[e]; }
  double epsilon() const { return epsilon_; }
  double gravity() const { return gravity_; }

  /// Junction slot of vertex v, or npos for a boundary vertex.
  std::size_t junction_index(std::size_t v) const { return junction_of_vertex_[v]; }
  std::size_t junction_vertex(std::size_t k) const { return classes_.interior[k]; }
  bool is_boundary_vertex(std::size_t v) const { return junction_of_vertex_[v] == npos; }

  /// End faces attached to vertex v.
  const std::vector<std::size_t>& port_faces(std::size_t v) const { return port_faces_.at(v); }

  /// C weight of a density node.
  double cell_weight(std::size_t c) const { return cells_[c].area * cells_[c].dx; }
  /// C weight of a velocity node.
  double face_weight(std::size_t f) const { return epsilon_ * epsilon_ * faces_[f].weight; }

  /// Share of cell c in (a rho)_f.
  double face_share(std::size_t f, std::size_t c) const {
    return 0.5 * cells_[c].dx / faces_[f].weight * cells_[c].area;
  }

  double face_area_density(std::size_t f, std::span<const double> rho) const {
    const Face& fc = faces_[f];
    double s = 0.0;
    if (fc.left_cell != npos) s += face_share(f, fc.left_cell) * rho[fc.left_cell];
    if (fc.right_cell != npos) s += face_share(f, fc.right_cell) * rho[fc.right_cell];
    return s;
  }

  NetworkGrid with_epsilon(double epsilon) const {
    return rebuilt(topology_.with_model(epsilon, gravity_));
  }

  /// Same cell counts on a topology with modified parameters.
  NetworkGrid rebuilt(const NetworkTopology& topology) const {
    std::vector<std::size_t> n;
    for (const auto& g : edges_) n.push_back(g.cells);
    return NetworkGrid(topology, n);
  }

  bool same_layout(const NetworkGrid& other) const {
    if (other.edges_.size() != edges_.size()) return false;
    for (std::size_t e = 0; e < edges_.size(); ++e)
      if (edges_[e].cells != other.edges_[e].cells || edges_[e].length != other.edges_[e].length)
        return false;
    return true;
  }

private:
  NetworkTopology topology_;
  VertexClass classes_;
  std::vector<EdgeGrid> edges_;
  std::vector<std::size_t> cell_offset_, face_offset_;
  std::vector<Cell> cells_;
  std::vector<Face> faces_;
  std::vector<std::size_t> junction_of_vertex_;
  std::map<std::size_t, std::vector<std::size_t>> port_faces_;
  double epsilon_ = 1.0;
  double gravity_ = 0.0;
};

inline NetworkGrid build_grid(const NetworkTopology& topology, std::size_t cells_per_edge) {
  return NetworkGrid(topology, cells_per_edge);
}

/// Samples rho(edge, x) at cells and w(edge, x) at faces.
template <class RhoFn, class WFn>
NetworkState make_state(const NetworkGrid& grid, RhoFn&& rho, WFn&& w, double tau = 0.0) {
  NetworkState s;
  s.tau = tau;
  for (const auto& c : grid.cells()) s.rho.push_back(rho(c.edge, c.x));
  for (const auto& f : grid.faces()) s.w.push_back(w(f.edge, f.x));
  s.junction_h.assign(grid.junction_count(), 0.0);
  return s;
}

inline void check_layout(const NetworkGrid& grid, const NetworkState& s) {
  if (s.rho.size() != grid.cell_count() || s.w.size() != grid.face_count())
    throw std::invalid_argument("state does not match the grid layout");
}

inline void require_positive_density(const NetworkGrid& grid, const NetworkState& s) {
  check_layout(grid, s);
  for (std::size_t c = 0; c < s.rho.size(); ++c)
    if (!(s.rho[c] > 0.0) || !std::isfinite(s.rho[c]))
      throw std::domain_error("non-positive density on edge '" +
                              grid.topology().edges()[grid.cells()[c].edge].name + "' cell " +
                              std::to_string(grid.cells()[c].local));
  for (double w : s.w)
    if (!std::isfinite(w)) throw std::domain_error("non-finite velocity");
}

struct AdmissibilityReport {
  bool ok = true;
  std::vector<std::string> violations;
};

/// Pointwise bound check of a state plus the sampled subsonic margin of the bounds.
inline AdmissibilityReport check_admissible(const NetworkGrid& grid, const NetworkState& s,
                                            const AdmissibleBounds& b, const GasLaw& law) {
  check_layout(grid, s);
  AdmissibilityReport r;
  auto where = [&](std::size_t edge, const char* kind, std::size_t local) {
    return " on edge '" + grid.topology().edges()[edge].name + "' " + kind + " " + std::to_string(local);
  };
  for (std::size_t c = 0; c < s.rho.size(); ++c)
    if (!(s.rho[c] >= b.rho_min && s.rho[c] <= b.rho_max))
      r.violations.push_back("density " + format_double(s.rho[c]) + " outside [" + format_double(b.rho_min) +
                             ", " + format_double(b.rho_max) + "]" +
                             where(grid.cells()[c].edge, "cell", grid.cells()[c].local));
  for (std::size_t f = 0; f < s.w.size(); ++f)
    if (!(std::abs(s.w[f]) <= b.w_max))
      r.violations.push_back("velocity " + format_double(s.w[f]) + " exceeds " + format_double(b.w_max) +
                             where(grid.faces()[f].edge, "face", grid.faces()[f].local));
  if (!subsonic_margin_holds(b, law))
    r.violations.push_back("subsonic margin rho P''(rho) >= 4 eps^2 w^2 violated");
  r.ok = r.violations.empty();
  return r;
}

/// Cell average of w^2/2 over the two faces of cell c.
inline double cell_kinetic(const NetworkGrid& grid, std::span<const double> w, std::size_t c) {
  const auto& cell = grid.cells()[c];
  double wl = w[cell.left_face], wr = w[cell.right_face];
  return 0.25 * (wl * wl + wr * wr);
}

/// Co-state (h, m) of the discrete energy.
inline CoState costate(const NetworkGrid& grid, const NetworkState& s, const GasLaw& law,
                       bool include_gravity = true) {
  require_positive_density(grid, s);
  const double eps2 = grid.epsilon() * grid.epsilon();
  const double g = include_gravity ? grid.gravity() : 0.0;
  CoState z;
  z.h.resize(grid.cell_count());
  z.m.resize(grid.face_count());
  for (std::size_t c = 0; c < grid.cell_count(); ++c)
    z.h[c] = eps2 * cell_kinetic(grid, s.w, c) + law.potential_d1(s.rho[c]) +
             g * grid.cells()[c].elevation;
  for (std::size_t f = 0; f < grid.face_count(); ++f)
    z.m[f] = grid.face_area_density(f, s.rho) * s.w[f];
  return z;
}

inline double total_energy(const NetworkGrid& grid, const NetworkState& s, const GasLaw& law) {
  require_positive_density(grid, s);
  const double eps2 = grid.epsilon() * grid.epsilon();
  double H = 0.0;
  for (std::size_t c = 0; c < grid.cell_count(); ++c) {
    const auto& cell = grid.cells()[c];
    double rho = s.rho[c];
    H += grid.cell_weight(c) * (law.potential(rho) + grid.gravity() * cell.elevation * rho +
                                eps2 * rho * cell_kinetic(grid, s.w, c));
  }
  return H;
}

/// Derivative of the co-state map at s in direction d: G(u) d.
inline CoState hessian_apply(const NetworkGrid& grid, const NetworkState& s,
                             const NetworkState& d, const GasLaw& law) {
  require_positive_density(grid, s);
  check_layout(grid, d);
  const double eps2 = grid.epsilon() * grid.epsilon();
  CoState out;
  out.h.resize(grid.cell_count());
  out.m.resize(grid.face_count());
  for (std::size_t c = 0; c < grid.cell_count(); ++c) {
    const auto& cell = grid.cells()[c];
    out.h[c] = law.potential_d2(s.rho[c]) * d.rho[c] +
               0.5 * eps2 * (s.w[cell.left_face] * d.w[cell.left_face] +
                             s.w[cell.right_face] * d.w[cell.right_face]);
  }
  for (std::size_t f = 0; f < grid.face_count(); ++f)
    out.m[f] = grid.face_area_density(f, s.rho) * d.w[f] + grid.face_area_density(f, d.rho) * s.w[f];
  return out;
}

/// <u, v>_C = sum a dx u_rho v_rho + sum eps^2 wt u_w v_w.
inline double c_inner(const NetworkGrid& grid, std::span<const double> u_rho,
                      std::span<const double> u_w, std::span<const double> v_rho,
                      std::span<const double> v_w) {
  double s = 0.0;
  for (std::size_t c = 0; c < grid.cell_count(); ++c) s += grid.cell_weight(c) * u_rho[c] * v_rho[c];
  for (std::size_t f = 0; f < grid.face_count(); ++f) s += grid.face_weight(f) * u_w[f] * v_w[f];
  return s;
}

/// Enthalpy per vertex at time tau: schedules at boundary vertices, the given
/// junction values at interior vertices.
inline std::vector<double> port_values(const NetworkGrid& grid, const BoundaryData& boundary,
                                       double tau, std::span<const double> junction_h) {
  std::vector<double> ports(grid.topology().vertex_count(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t v : grid.vertex_class().boundary) {
    auto it = boundary.find(v);
    if (it == boundary.end())
      throw BoundaryDataError("missing boundary enthalpy at boundary vertex '" +
                              grid.topology().vertices()[v] + "'");
    ports[v] = it->second(tau);
  }
  for (std::size_t k = 0; k < grid.junction_count(); ++k)
    ports[grid.junction_vertex(k)] = junction_h.empty() ? 0.0 : junction_h[k];
  return ports;
}

inline void validate_boundary(const NetworkGrid& grid, const BoundaryData& boundary) {
  for (std::size_t v : grid.vertex_class().boundary)
    if (!boundary.count(v))
      throw BoundaryDataError("missing boundary enthalpy at boundary vertex '" +
                              grid.topology().vertices()[v] + "'");
}

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Matrix representation of the port-Hamiltonian structure on the grid.
/// State and co-state vectors are ordered [cells; faces]; B maps vertex
/// enthalpies to the momentum rows of the end faces.
struct DiscreteOperators {
  SparseMatrix C; // diag(a dx, eps^2 wt)
  SparseMatrix J; // [[0, D], [-D^T, 0]]
  SparseMatrix R; // diag(0, wt gamma |w| / (a rho)_f)
  SparseMatrix B; // (cells + faces) x vertices, entries -n^e(v)
};

inline DiscreteOperators assemble(const NetworkGrid& grid, const NetworkState& s) {
  require_positive_density(grid, s);
  const std::size_t nc = grid.cell_count(), nf = grid.face_count(), n = nc + nf;
  using T = Eigen::Triplet<double>;
  std::vector<T> c, j, r, b;
  for (std::size_t k = 0; k < nc; ++k) c.emplace_back(k, k, grid.cell_weight(k));
  for (std::size_t f = 0; f < nf; ++f) {
    c.emplace_back(nc + f, nc + f, grid.face_weight(f));
    const auto& face = grid.faces()[f];
    // D: (D m)_c = m_right - m_left
    if (face.left_cell != npos) {
      j.emplace_back(face.left_cell, nc + f, 1.0);
      j.emplace_back(nc + f, face.left_cell, -1.0);
    }
    if (face.right_cell != npos) {
      j.emplace_back(face.right_cell, nc + f, -1.0);
      j.emplace_back(nc + f, face.right_cell, 1.0);
    }
    double ar = grid.face_area_density(f, s.rho);
    double entry = face.weight * face.friction * std::abs(s.w[f]) / ar;
    if (entry != 0.0) r.emplace_back(nc + f, nc + f, entry);
    if (face.vertex != npos) b.emplace_back(nc + f, face.vertex, -static_cast<double>(face.incidence));
  }
  DiscreteOperators ops;
  ops.C.resize(n, n);
  ops.J.resize(n, n);
  ops.R.resize(n, n);
  ops.B.resize(n, grid.topology().vertex_count());
  ops.C.setFromTriplets(c.begin(), c.end());
  ops.J.setFromTriplets(j.begin(), j.end());
  ops.R.setFromTriplets(r.begin(), r.end());
  ops.B.setFromTriplets(b.begin(), b.end());
  return ops;
}

inline Eigen::VectorXd stack(std::span<const double> a, std::span<const double> b) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size() + b.size()));
  for (std::size_t k = 0; k < a.size(); ++k) v[static_cast<Eigen::Index>(k)] = a[k];
  for (std::size_t k = 0; k < b.size(); ++k) v[static_cast<Eigen::Index>(a.size() + k)] = b[k];
  return v;
}

struct StateRate {
  std::vector<double> rho; // d rho / d tau
  std::vector<double> w;   // d w / d tau
};

/// C^{-1} (B h_ports - (J + R(u)) z(u)) with boundary schedules evaluated at
/// state.tau and junction enthalpies taken from state.junction_h.
inline StateRate spatial_residual(const NetworkGrid& grid, const NetworkState& state,
                                  const DiscreteOperators& ops, const BoundaryData& boundary,
                                  const GasLaw& law) {
  if (!(grid.epsilon() > 0.0))
    throw std::invalid_argument("spatial residual: epsilon must be positive");
  auto ports = port_values(grid, boundary, state.tau, state.junction_h);
  CoState z = costate(grid, state, law);
  Eigen::VectorXd zv = stack(z.h, z.m);
  Eigen::VectorXd pv = Eigen::Map<const Eigen::VectorXd>(ports.data(), static_cast<Eigen::Index>(ports.size()));
  Eigen::VectorXd rhs = ops.B * pv - (ops.J + ops.R) * zv;
  StateRate out;
  const std::size_t nc = grid.cell_count();
  for (std::size_t c = 0; c < nc; ++c) out.rho.push_back(rhs[static_cast<Eigen::Index>(c)] / grid.cell_weight(c));
  for (std::size_t f = 0; f < grid.face_count(); ++f)
    out.w.push_back(rhs[static_cast<Eigen::Index>(nc + f)] / grid.face_weight(f));
  return out;
}

/// Writes a sparse matrix in MatrixMarket coordinate format.
inline void write_matrix_market(const std::string& path, const SparseMatrix& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << m.rows() << " " << m.cols() << " " << m.nonZeros() << "\n";
  char buf[64];
  for (int k = 0; k < m.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(m, k); it; ++it) {
      std::snprintf(buf, sizeof buf, "%.17g", it.value());
      out << it.row() + 1 << " " << it.col() + 1 << " " << buf << "\n";
    }
}

} // namespace gasnet
