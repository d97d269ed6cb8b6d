#pragma once

// Tabular outputs (comma-separated, one header line) and the run manifest.
//
// Manifest format: one `key = value` per line, keys in insertion order, '#'
// comment lines. Values are printed with 17 significant digits so a run can be
// repeated from the manifest alone.

#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "gasnet/energy.hpp"
#include "gasnet/mms.hpp"
#include "gasnet/study.hpp"

namespace gasnet {

class Manifest {
public:
  void set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries_)
      if (k == key) {
        v = value;
        return;
      }
    entries_.emplace_back(key, value);
  }
  void set(const std::string& key, double value) { set(key, format_double(value)); }
  void merge(const std::vector<std::pair<std::string, std::string>>& kv, const std::string& prefix = "") {
    for (const auto& [k, v] : kv) set(prefix + k, v);
  }
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string str() const {
    std::string out = "# gasnet run manifest\n";
    for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
    return out;
  }
  void write(const std::filesystem::path& path) const { write_text(path, str()); }

  static Manifest read(const std::filesystem::path& path) {
    Manifest m;
    auto doc = ConfigDocument::parse_string("[manifest]\n" + read_text(path), path.string());
    for (const auto& l : doc.lines("manifest")) {
      auto kv = split_key_value(l.text);
      if (!kv) throw ConfigError(l, "expected 'key = value'");
      m.set(kv->first, kv->second);
    }
    return m;
  }

  static void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << text;
  }

private:
  static std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }

  std::vector<std::pair<std::string, std::string>> entries_;
};

inline std::string state_csv(const NetworkGrid& grid, const NetworkState& s) {
  std::string out = "kind,index,edge,x,value\n";
  for (std::size_t c = 0; c < grid.cell_count(); ++c) {
    const auto& cell = grid.cells()[c];
    out += "rho," + std::to_string(c) + "," + grid.topology().edges()[cell.edge].name + "," + format_double(cell.x) +
           "," + format_double(s.rho[c]) + "\n";
  }
  for (std::size_t f = 0; f < grid.face_count(); ++f) {
    const auto& face = grid.faces()[f];
    out += "w," + std::to_string(f) + "," + grid.topology().edges()[face.edge].name + "," + format_double(face.x) +
           "," + format_double(s.w[f]) + "\n";
  }
  return out;
}

/// Long-format snapshots: tau,kind,index,edge,x,value for every `every`-th snapshot.
inline std::string snapshots_csv(const NetworkGrid& grid, const Trajectory& t, std::size_t every = 1) {
  std::string out = "tau,kind,index,edge,x,value\n";
  for (std::size_t n = 0; n < t.snapshots.size(); ++n) {
    if (n % every != 0 && n + 1 != t.snapshots.size()) continue;
    const auto& s = t.snapshots[n];
    std::string tau = format_double(s.tau) + ",";
    for (std::size_t c = 0; c < grid.cell_count(); ++c)
      out += tau + "rho," + std::to_string(c) + "," + grid.topology().edges()[grid.cells()[c].edge].name + "," +
             format_double(grid.cells()[c].x) + "," + format_double(s.rho[c]) + "\n";
    for (std::size_t f = 0; f < grid.face_count(); ++f)
      out += tau + "w," + std::to_string(f) + "," + grid.topology().edges()[grid.faces()[f].edge].name + "," +
             format_double(grid.faces()[f].x) + "," + format_double(s.w[f]) + "\n";
  }
  return out;
}

/// Per-snapshot energy trace with the diagnostics of the step that produced it.
inline std::string trace_csv(const NetworkGrid& grid, const Trajectory& t, const BoundaryData& boundary) {
  std::string out = "tau,energy,dissipation,boundary_flux,balance_residual,newton_iterations,newton_residual,"
                    "junction_mass,junction_energy,admissible\n";
  auto tr = energy_trace(grid, t, boundary);
  for (std::size_t n = 0; n < tr.size(); ++n) {
    const auto& e = tr[n];
    double it = 0, res = 0, jm = 0, je = 0;
    if (n > 0) {
      const auto& st = t.steps[n - 1].stage;
      it = st.iterations;
      res = st.residual;
      for (double v : st.junction_mass) jm = std::max(jm, std::abs(v));
      for (double v : st.junction_energy) je = std::max(je, std::abs(v));
    }
    out += format_double(e.tau) + "," + format_double(e.H) + "," + format_double(e.D) + "," + format_double(e.flux) +
           "," + format_double(e.residual) + "," + format_double(it) + "," + format_double(res) + "," +
           format_double(jm) + "," + format_double(je) + "," + (t.admissible[n] ? "1" : "0") + "\n";
  }
  return out;
}

inline std::string study_csv(const StudyResult& r) {
  std::string out = "parameter,measure,rho_sq_sup,w_l3_integral,error,complete,certificate,min_slack,excluded,"
                    "growth_rate,seconds\n";
  for (const auto& p : r.points)
    out += format_double(p.parameter) + "," + format_double(p.measure) + "," + format_double(p.error.rho_sq) + "," +
           format_double(p.error.w_cubed) + "," + format_double(p.error.total()) + "," + (p.complete ? "1" : "0") +
           "," + (p.certificate.holds ? "1" : "0") + "," + format_double(p.certificate.min_slack) + "," +
           std::to_string(p.certificate.excluded) + "," + format_double(p.certificate.c) + "," +
           format_double(p.seconds) + "\n";
  return out;
}

inline std::string convergence_csv(const ConvergenceTable& t) {
  std::string out = t.variable + ",error,order\n";
  for (const auto& r : t.rows) out += format_double(r.h) + "," + format_double(r.error) + "," + format_double(r.order) + "\n";
  return out;
}

} // namespace gasnet
