#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gasnet/config_text.hpp"
#include "gasnet/gas_model.hpp"

namespace gasnet {

class TopologyError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct Edge {
  std::string name;
  std::size_t from = 0; // vertex at x = 0
  std::size_t to = 0;   // vertex at x = length
  PipeParameters pipe;
};

struct VertexClass {
  std::vector<std::size_t> interior; // |E(v)| > 1
  std::vector<std::size_t> boundary; // |E(v)| = 1
};

/// Directed, connected, finite graph of pipes.
class NetworkTopology {
public:
  NetworkTopology() = default;

  NetworkTopology(std::vector<std::string> vertices, std::vector<Edge> edges)
      : vertices_(std::move(vertices)), edges_(std::move(edges)) {
    validate();
  }

  /// Single pipe from "v0" to "v1".
  static NetworkTopology single_pipe(const PipeParameters& pipe) {
    return NetworkTopology({"v0", "v1"}, {Edge{"e0", 0, 1, pipe}});
  }

  const std::vector<std::string>& vertices() const { return vertices_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t vertex_count() const { return vertices_.size(); }
  std::size_t edge_count() const { return edges_.size(); }

  /// Edges incident to v.
  const std::vector<std::size_t>& incident(std::size_t v) const { return adjacency_.at(v); }

  std::size_t vertex_index(const std::string& name) const {
    for (std::size_t v = 0; v < vertices_.size(); ++v)
      if (vertices_[v] == name) return v;
    throw TopologyError("unknown vertex '" + name + "'");
  }

  std::size_t edge_index(const std::string& name) const {
    for (std::size_t e = 0; e < edges_.size(); ++e)
      if (edges_[e].name == name) return e;
    throw TopologyError("unknown edge '" + name + "'");
  }

  /// n^e(v): +1 if e ends at v, -1 if e starts at v, 0 otherwise.
  int incidence(std::size_t v, std::size_t e) const {
    const Edge& edge = edges_.at(e);
    if (edge.to == v) return 1;
    if (edge.from == v) return -1;
    return 0;
  }

  VertexClass classify() const {
    VertexClass vc;
    for (std::size_t v = 0; v < vertices_.size(); ++v) {
      std::size_t deg = adjacency_[v].size();
      if (deg == 0) throw TopologyError("isolated vertex '" + vertices_[v] + "'");
      (deg > 1 ? vc.interior : vc.boundary).push_back(v);
    }
    return vc;
  }

  /// Copy with every edge's parameters passed through `f`.
  template <class F>
  NetworkTopology transformed(F&& f) const {
    NetworkTopology t = *this;
    for (auto& e : t.edges_) f(e.pipe);
    t.validate();
    return t;
  }

  NetworkTopology with_model(double epsilon, double gravity) const {
    return transformed([&](PipeParameters& p) {
      p.epsilon = epsilon;
      p.gravity = gravity;
    });
  }

  friend bool operator==(const NetworkTopology& a, const NetworkTopology& b) {
    if (a.vertices_ != b.vertices_ || a.edges_.size() != b.edges_.size()) return false;
    for (std::size_t e = 0; e < a.edges_.size(); ++e) {
      const Edge &x = a.edges_[e], &y = b.edges_[e];
      if (x.name != y.name || x.from != y.from || x.to != y.to) return false;
      if (x.pipe.length != y.pipe.length || !(x.pipe.area == y.pipe.area) ||
          !(x.pipe.friction == y.pipe.friction) || !(x.pipe.elevation == y.pipe.elevation))
        return false;
    }
    return true;
  }

private:
  void validate() {
    if (vertices_.empty() || edges_.empty()) throw TopologyError("network needs vertices and edges");
    for (std::size_t v = 0; v < vertices_.size(); ++v)
      for (std::size_t u = 0; u < v; ++u)
        if (vertices_[u] == vertices_[v]) throw TopologyError("duplicate vertex '" + vertices_[v] + "'");
    adjacency_.assign(vertices_.size(), {});
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      const Edge& edge = edges_[e];
      for (std::size_t f = 0; f < e; ++f)
        if (edges_[f].name == edge.name) throw TopologyError("duplicate edge '" + edge.name + "'");
      if (edge.from >= vertices_.size() || edge.to >= vertices_.size())
        throw TopologyError("edge '" + edge.name + "' references an unknown vertex");
      if (edge.from == edge.to)
        throw TopologyError("edge '" + edge.name + "' must connect distinct vertices");
      edge.pipe.validate();
      adjacency_[edge.from].push_back(e);
      adjacency_[edge.to].push_back(e);
    }
    for (std::size_t v = 0; v < vertices_.size(); ++v)
      if (adjacency_[v].empty()) throw TopologyError("isolated vertex '" + vertices_[v] + "'");

    // connectivity by union-find over edges
    std::vector<std::size_t> parent(vertices_.size());
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto root = [&](std::size_t v) {
      while (parent[v] != v) v = parent[v] = parent[parent[v]];
      return v;
    };
    for (const auto& edge : edges_) parent[root(edge.from)] = root(edge.to);
    for (std::size_t v = 1; v < vertices_.size(); ++v)
      if (root(v) != root(0)) throw TopologyError("network is not connected");
  }

  std::vector<std::string> vertices_;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::size_t>> adjacency_;
};

// Topology text format:
//
//   [vertices]
//   v0 v1 v2            (names, whitespace or line separated)
//   [edges]
//   e0 v0 v1 length=1 area=1 friction=1 elevation=0:0,1:0.5
//
// `area`, `friction`, `elevation` accept a number or a piecewise-linear
// breakpoint list x:value,x:value,... in edge-local coordinates.

/// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[40];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline Profile parse_profile(const ConfigLine& at, const std::string& text) {
  if (text.find(':') == std::string::npos) return Profile::constant(parse_double(at, text));
  std::vector<double> xs, ys;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError(at, "expected x:value in profile '" + text + "'");
    xs.push_back(parse_double(at, trim(item.substr(0, colon))));
    ys.push_back(parse_double(at, trim(item.substr(colon + 1))));
  }
  try {
    return Profile(std::move(xs), std::move(ys));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(at, e.what());
  }
}

inline std::string format_profile(const Profile& p) {
  if (p.breakpoints().size() == 1) return format_double(p.values().front());
  std::string out;
  for (std::size_t k = 0; k < p.breakpoints().size(); ++k) {
    if (k) out += ',';
    out += format_double(p.breakpoints()[k]) + ":" + format_double(p.values()[k]);
  }
  return out;
}

inline NetworkTopology parse_topology(const ConfigDocument& doc) {
  std::vector<std::string> names;
  for (const auto& l : doc.lines("vertices"))
    for (auto& tok : split_ws(l.text)) names.push_back(tok);

  auto find_vertex = [&](const ConfigLine& at, const std::string& n) {
    for (std::size_t v = 0; v < names.size(); ++v)
      if (names[v] == n) return v;
    throw ConfigError(at, "unknown vertex '" + n + "'");
  };

  std::vector<Edge> edges;
  for (const auto& l : doc.lines("edges")) {
    auto tok = split_ws(l.text);
    if (tok.size() < 3) throw ConfigError(l, "expected 'name from to key=value...'");
    Edge e;
    e.name = tok[0];
    e.from = find_vertex(l, tok[1]);
    e.to = find_vertex(l, tok[2]);
    bool have_length = false;
    for (std::size_t k = 3; k < tok.size(); ++k) {
      auto kv = split_key_value(tok[k]);
      if (!kv) throw ConfigError(l, "expected key=value, got '" + tok[k] + "'");
      const auto& [key, value] = *kv;
      if (key == "length") {
        e.pipe.length = parse_double(l, value);
        have_length = true;
      } else if (key == "area") {
        e.pipe.area = parse_profile(l, value);
      } else if (key == "friction") {
        e.pipe.friction = parse_profile(l, value);
      } else if (key == "elevation") {
        e.pipe.elevation = parse_profile(l, value);
      } else {
        throw ConfigError(l, "unknown edge attribute '" + key + "'");
      }
    }
    if (!have_length) throw ConfigError(l, "edge '" + e.name + "' needs a length");
    edges.push_back(std::move(e));
  }
  if (names.empty()) throw ConfigError("topology: missing [vertices] section");
  if (edges.empty()) throw ConfigError("topology: missing [edges] section");
  try {
    return NetworkTopology(std::move(names), std::move(edges));
  } catch (const TopologyError& e) {
    throw ConfigError(std::string("topology: ") + e.what());
  }
}

inline std::string serialize_topology(const NetworkTopology& t) {
  std::string out = "[vertices]\n";
  for (const auto& v : t.vertices()) out += v + "\n";
  out += "[edges]\n";
  for (const auto& e : t.edges()) {
    out += e.name + " " + t.vertices()[e.from] + " " + t.vertices()[e.to];
    out += " length=" + format_double(e.pipe.length);
    out += " area=" + format_profile(e.pipe.area);
    out += " friction=" + format_profile(e.pipe.friction);
    out += " elevation=" + format_profile(e.pipe.elevation);
    out += "\n";
  }
  return out;
}

} // namespace gasnet
