#pragma once

// Scenario files. Sections (see scenarios/ for complete files):
//
//   [scenario]  name, description
//   [gas]       law = isothermal | power_law | table; sound_speed | kappa, exponent | file
//   [model]     epsilon, gravity
//   [vertices] / [edges]   topology, usually pulled in with `include = net.topo`
//   [initial]   rho = <expr in x, L>, w = <expr> | limit, rho.<edge> = ... overrides,
//               or file = <state csv>
//   [boundary]  <vertex> = <expr in tau> | table t0:h0, t1:h1, ...
//   [solver]    cells, dt, final_time, scheme, newton_tol, max_iterations, parabolic
//   [bounds]    rho_min rho_max w_max eps_max area_min area_max gamma_min gamma_max gz_max
//   [study]     eps_list, gamma_offsets, amplitudes, perturb, threads
//   [output]    dir, every
//
// Expressions may call dP(r) = P'(r) of the scenario's gas law.

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gasnet/config_text.hpp"
#include "gasnet/discretization.hpp"
#include "gasnet/expression.hpp"
#include "gasnet/gas_model.hpp"
#include "gasnet/network.hpp"
#include "gasnet/solver.hpp"

namespace gasnet {

struct StudySpec {
  std::vector<double> eps_list;
  std::vector<double> gamma_offsets;
  std::vector<double> amplitudes;
  std::vector<std::string> perturb; // boundary vertices perturbed in the boundary study
  std::size_t threads = 1;
};

struct InitialSpec {
  std::vector<Expression> rho; // per edge
  std::vector<Expression> w;   // per edge; empty when `limit`
  bool w_limit = false;
  std::optional<std::filesystem::path> file;
};

struct Scenario {
  std::string name;
  std::string description;
  std::filesystem::path source;
  GasLaw law = GasLaw::isothermal(1.0);
  NetworkTopology topology;
  double epsilon = 1.0;
  double gravity = 0.0;
  InitialSpec initial;
  BoundaryData boundary;
  std::size_t cells = 32;
  SolverConfig solver;
  std::optional<AdmissibleBounds> bounds;
  StudySpec study;
  std::filesystem::path output_dir = "out";
  std::size_t output_every = 1;
  std::vector<std::pair<std::string, std::string>> resolved; // every setting, for the manifest
};

namespace detail {

inline std::vector<double> parse_list(const ConfigLine& at, const std::string& text) {
  std::vector<double> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_double(at, item));
  }
  return out;
}

inline std::vector<std::string> parse_names(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    for (auto& tok : split_ws(item)) out.push_back(tok);
  }
  return out;
}

inline std::size_t parse_count(const ConfigLine& at, const std::string& text) {
  double v = parse_double(at, text);
  if (!(v >= 1.0) || v != std::floor(v)) throw ConfigError(at, "expected a positive integer, got '" + text + "'");
  return static_cast<std::size_t>(v);
}

inline bool parse_bool(const ConfigLine& at, const std::string& text) {
  if (text == "true" || text == "yes" || text == "1") return true;
  if (text == "false" || text == "no" || text == "0") return false;
  throw ConfigError(at, "expected true or false, got '" + text + "'");
}

inline Expression parse_expression(const ConfigLine& at, const std::string& text,
                                   const std::vector<std::string>& vars, const GasLaw& law) {
  std::map<std::string, Expression::Unary> fns{{"dP", [law](double r) { return law.potential_d1(r); }}};
  try {
    return Expression::parse(text, vars, fns);
  } catch (const ExpressionError& e) {
    throw ConfigError(at, e.what());
  }
}

inline void check_keys(const std::map<std::string, std::pair<std::string, ConfigLine>>& entries,
                       const std::string& section, const std::set<std::string>& allowed) {
  for (const auto& [key, v] : entries)
    if (!allowed.count(key) && !(section == "initial" && (key.rfind("rho.", 0) == 0 || key.rfind("w.", 0) == 0)))
      throw ConfigError(v.second, "unknown key '" + key + "' in [" + section + "]");
}

} // namespace detail

/// Reads the state CSV written by write_state_csv (kind,index,edge,x,value).
inline NetworkState read_state_csv(const std::filesystem::path& path, const NetworkGrid& grid) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open state file '" + path.string() + "'");
  NetworkState s;
  s.rho.assign(grid.cell_count(), std::numeric_limits<double>::quiet_NaN());
  s.w.assign(grid.face_count(), std::numeric_limits<double>::quiet_NaN());
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    ConfigLine at{path.string(), lineno, raw};
    std::string text = trim(raw);
    if (text.empty() || text.front() == '#' || text.rfind("kind", 0) == 0) continue;
    std::vector<std::string> col;
    std::istringstream row(text);
    std::string item;
    while (std::getline(row, item, ',')) col.push_back(trim(item));
    if (col.size() != 5) throw ConfigError(at, "expected 5 columns kind,index,edge,x,value");
    std::size_t idx = static_cast<std::size_t>(parse_double(at, col[1]));
    double v = parse_double(at, col[4]);
    if (col[0] == "rho" && idx < s.rho.size()) s.rho[idx] = v;
    else if (col[0] == "w" && idx < s.w.size()) s.w[idx] = v;
    else throw ConfigError(at, "entry '" + col[0] + " " + col[1] + "' does not fit the grid");
  }
  for (double v : s.rho)
    if (std::isnan(v)) throw ConfigError("state file '" + path.string() + "' does not cover every cell");
  for (double v : s.w)
    if (std::isnan(v)) throw ConfigError("state file '" + path.string() + "' does not cover every face");
  return s;
}

inline Scenario load_scenario(const ConfigDocument& doc) {
  Scenario sc;
  auto note = [&](const std::string& k, const std::string& v) { sc.resolved.emplace_back(k, v); };

  auto meta = doc.entries("scenario");
  detail::check_keys(meta, "scenario", {"name", "description"});
  sc.name = meta.count("name") ? meta.at("name").first : "unnamed";
  sc.description = meta.count("description") ? meta.at("description").first : "";
  note("scenario.name", sc.name);

  // gas law
  auto gas = doc.entries("gas");
  detail::check_keys(gas, "gas", {"law", "sound_speed", "kappa", "exponent", "file"});
  std::string law = gas.count("law") ? gas.at("law").first : "isothermal";
  auto num = [&](const std::map<std::string, std::pair<std::string, ConfigLine>>& m, const std::string& key,
                 double fallback) { return m.count(key) ? parse_double(m.at(key).second, m.at(key).first) : fallback; };
  try {
    if (law == "isothermal") {
      double c = num(gas, "sound_speed", 1.0);
      sc.law = GasLaw::isothermal(c);
      note("gas.law", "isothermal");
      note("gas.sound_speed", format_double(c));
    } else if (law == "power_law") {
      double k = num(gas, "kappa", 1.0), ex = num(gas, "exponent", 1.4);
      sc.law = GasLaw::power_law(k, ex);
      note("gas.law", "power_law");
      note("gas.kappa", format_double(k));
      note("gas.exponent", format_double(ex));
    } else if (law == "table") {
      if (!gas.count("file")) throw ConfigError(gas.at("law").second, "table law needs 'file'");
      auto p = std::filesystem::path(gas.at("file").first);
      if (p.is_relative()) p = doc.base_dir() / p;
      sc.law = GasLaw::from_file(p.string());
      note("gas.law", "table");
      note("gas.file", p.string());
    } else {
      throw ConfigError(gas.at("law").second, "unknown gas law '" + law + "'");
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(gas.count("law") ? gas.at("law").second : ConfigLine{"<gas>", 0, ""}, e.what());
  }

  auto model = doc.entries("model");
  detail::check_keys(model, "model", {"epsilon", "gravity"});
  sc.epsilon = num(model, "epsilon", 1.0);
  sc.gravity = num(model, "gravity", 0.0);
  if (sc.epsilon < 0.0) throw ConfigError(model.at("epsilon").second, "epsilon must be non-negative");
  note("model.epsilon", format_double(sc.epsilon));
  note("model.gravity", format_double(sc.gravity));

  sc.topology = parse_topology(doc).with_model(sc.epsilon, sc.gravity);
  note("topology", std::to_string(sc.topology.vertex_count()) + " vertices, " +
                       std::to_string(sc.topology.edge_count()) + " edges");

  // initial state
  auto init = doc.entries("initial");
  detail::check_keys(init, "initial", {"rho", "w", "file"});
  const std::vector<std::string> xvars{"x", "L"};
  if (init.count("file")) {
    auto p = std::filesystem::path(init.at("file").first);
    if (p.is_relative()) p = doc.base_dir() / p;
    sc.initial.file = p;
    note("initial.file", p.string());
  } else {
    for (const auto& e : sc.topology.edges()) {
      std::string key = init.count("rho." + e.name) ? "rho." + e.name : "rho";
      if (!init.count(key))
        throw ConfigError("scenario: [initial] needs 'rho', 'rho." + e.name + "' or 'file'");
      sc.initial.rho.push_back(detail::parse_expression(init.at(key).second, init.at(key).first, xvars, sc.law));
      note("initial.rho." + e.name, init.at(key).first);
    }
    std::string w = init.count("w") ? init.at("w").first : "0";
    if (w == "limit") {
      sc.initial.w_limit = true;
      note("initial.w", "limit");
    } else {
      for (const auto& e : sc.topology.edges()) {
        std::string key = init.count("w." + e.name) ? "w." + e.name : "w";
        const std::string text = init.count(key) ? init.at(key).first : "0";
        ConfigLine at = init.count(key) ? init.at(key).second : ConfigLine{"<initial>", 0, text};
        sc.initial.w.push_back(detail::parse_expression(at, text, xvars, sc.law));
        note("initial.w." + e.name, text);
      }
    }
  }

  // boundary schedules
  for (const auto& [vertex, entry] : doc.entries("boundary")) {
    const auto& [text, at] = entry;
    std::size_t v;
    try {
      v = sc.topology.vertex_index(vertex);
    } catch (const std::exception&) {
      throw ConfigError(at, "unknown vertex '" + vertex + "'");
    }
    if (sc.topology.incident(v).size() != 1)
      throw ConfigError(at, "vertex '" + vertex + "' is a junction; only boundary vertices take schedules");
    if (text.rfind("table", 0) == 0) {
      std::vector<double> t, h;
      std::string body = trim(text.substr(5));
      std::istringstream in(body);
      std::string item;
      while (std::getline(in, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        auto colon = item.find(':');
        if (colon == std::string::npos) throw ConfigError(at, "table entries are tau:h, got '" + item + "'");
        t.push_back(parse_double(at, item.substr(0, colon)));
        h.push_back(parse_double(at, item.substr(colon + 1)));
      }
      try {
        sc.boundary[v] = Schedule::table(t, h);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(at, e.what());
      }
    } else {
      auto ex = detail::parse_expression(at, text, {"tau"}, sc.law);
      if (text.find("tau") == std::string::npos) sc.boundary[v] = Schedule::constant(ex({0.0}));
      else sc.boundary[v] = Schedule::function([ex](double tau) { return ex({tau}); }, text);
    }
    note("boundary." + vertex, sc.boundary[v].description());
  }
  for (std::size_t v = 0; v < sc.topology.vertex_count(); ++v)
    if (sc.topology.incident(v).size() == 1 && !sc.boundary.count(v))
      throw ConfigError("scenario: missing boundary enthalpy at boundary vertex '" + sc.topology.vertices()[v] + "'");

  // solver
  auto solver = doc.entries("solver");
  detail::check_keys(solver, "solver",
                     {"cells", "dt", "final_time", "scheme", "newton_tol", "max_iterations", "parabolic"});
  if (solver.count("cells")) sc.cells = detail::parse_count(solver.at("cells").second, solver.at("cells").first);
  sc.solver.dt = num(solver, "dt", sc.solver.dt);
  sc.solver.final_time = num(solver, "final_time", sc.solver.final_time);
  sc.solver.newton_tol = num(solver, "newton_tol", sc.solver.newton_tol);
  if (solver.count("max_iterations"))
    sc.solver.max_iterations =
        static_cast<int>(detail::parse_count(solver.at("max_iterations").second, solver.at("max_iterations").first));
  if (solver.count("scheme")) {
    try {
      sc.solver.scheme = parse_scheme(solver.at("scheme").first);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(solver.at("scheme").second, e.what());
    }
  }
  if (solver.count("parabolic"))
    sc.solver.parabolic = detail::parse_bool(solver.at("parabolic").second, solver.at("parabolic").first);
  if (sc.epsilon == 0.0) sc.solver.parabolic = true;
  try {
    sc.solver.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("scenario [solver]: ") + e.what());
  }
  note("solver.cells", std::to_string(sc.cells));
  note("solver.dt", format_double(sc.solver.dt));
  note("solver.final_time", format_double(sc.solver.final_time));
  note("solver.scheme", to_string(sc.solver.scheme));
  note("solver.newton_tol", format_double(sc.solver.newton_tol));
  note("solver.max_iterations", std::to_string(sc.solver.max_iterations));
  note("solver.parabolic", sc.solver.parabolic ? "true" : "false");

  if (doc.has("bounds")) {
    auto b = doc.entries("bounds");
    detail::check_keys(b, "bounds",
                       {"rho_min", "rho_max", "w_max", "eps_max", "area_min", "area_max", "gamma_min", "gamma_max",
                        "gz_max"});
    AdmissibleBounds ab;
    ab.rho_min = num(b, "rho_min", ab.rho_min);
    ab.rho_max = num(b, "rho_max", ab.rho_max);
    ab.w_max = num(b, "w_max", ab.w_max);
    ab.eps_max = num(b, "eps_max", sc.epsilon);
    ab.area_min = num(b, "area_min", ab.area_min);
    ab.area_max = num(b, "area_max", ab.area_max);
    ab.gamma_min = num(b, "gamma_min", ab.gamma_min);
    ab.gamma_max = num(b, "gamma_max", ab.gamma_max);
    ab.gz_max = num(b, "gz_max", ab.gz_max);
    if (!(ab.rho_min > 0.0) || ab.rho_max < ab.rho_min || ab.area_max < ab.area_min || ab.gamma_max < ab.gamma_min)
      throw ConfigError(doc.lines("bounds").front(), "inconsistent [bounds]");
    sc.bounds = ab;
    sc.solver.bounds = ab;
    for (auto [k, v] : {std::pair{"rho_min", ab.rho_min}, {"rho_max", ab.rho_max}, {"w_max", ab.w_max},
                        {"eps_max", ab.eps_max}, {"area_min", ab.area_min}, {"area_max", ab.area_max},
                        {"gamma_min", ab.gamma_min}, {"gamma_max", ab.gamma_max}, {"gz_max", ab.gz_max}})
      note(std::string("bounds.") + k, format_double(v));
  }

  auto study = doc.entries("study");
  detail::check_keys(study, "study", {"eps_list", "gamma_offsets", "amplitudes", "perturb", "threads"});
  if (study.count("eps_list")) sc.study.eps_list = detail::parse_list(study.at("eps_list").second, study.at("eps_list").first);
  if (study.count("gamma_offsets"))
    sc.study.gamma_offsets = detail::parse_list(study.at("gamma_offsets").second, study.at("gamma_offsets").first);
  if (study.count("amplitudes"))
    sc.study.amplitudes = detail::parse_list(study.at("amplitudes").second, study.at("amplitudes").first);
  if (study.count("perturb")) {
    sc.study.perturb = detail::parse_names(study.at("perturb").first);
    for (const auto& n : sc.study.perturb) {
      std::size_t v = npos;
      try {
        v = sc.topology.vertex_index(n);
      } catch (const std::exception&) {
      }
      if (v == npos || !sc.boundary.count(v))
        throw ConfigError(study.at("perturb").second, "'" + n + "' is not a boundary vertex");
    }
  }
  if (study.count("threads")) sc.study.threads = detail::parse_count(study.at("threads").second, study.at("threads").first);

  auto output = doc.entries("output");
  detail::check_keys(output, "output", {"dir", "every"});
  if (output.count("dir")) {
    sc.output_dir = output.at("dir").first;
    if (sc.output_dir.is_relative() && !doc.base_dir().empty()) sc.output_dir = doc.base_dir() / sc.output_dir;
  }
  if (output.count("every")) sc.output_every = detail::parse_count(output.at("every").second, output.at("every").first);
  return sc;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  Scenario sc = load_scenario(ConfigDocument::parse_file(path));
  sc.source = path;
  return sc;
}

inline NetworkGrid scenario_grid(const Scenario& sc, std::optional<std::size_t> cells = std::nullopt) {
  return NetworkGrid(sc.topology, cells.value_or(sc.cells));
}

/// Initial state on `grid`; a `limit` velocity is recovered from the initial
/// density with the schedules at tau = 0.
inline NetworkState scenario_initial(const Scenario& sc, const NetworkGrid& grid) {
  NetworkState s;
  if (sc.initial.file) {
    s = read_state_csv(*sc.initial.file, grid);
  } else {
    for (const auto& c : grid.cells()) {
      double L = sc.topology.edges()[c.edge].pipe.length;
      s.rho.push_back(sc.initial.rho[c.edge]({c.x, L}));
    }
    if (sc.initial.w_limit) {
      std::vector<double> ports = port_values(grid, sc.boundary, 0.0, {});
      auto jh = solve_junction_enthalpies(grid, sc.law, s.rho);
      for (std::size_t k = 0; k < grid.junction_count(); ++k) ports[grid.junction_vertex(k)] = jh[k];
      s.w = velocity_recovery_parabolic(grid, sc.law, s.rho, ports);
    } else {
      for (const auto& f : grid.faces()) {
        double L = sc.topology.edges()[f.edge].pipe.length;
        s.w.push_back(sc.initial.w[f.edge]({f.x, L}));
      }
    }
  }
  require_positive_density(grid, s);
  return s;
}

} // namespace gasnet
