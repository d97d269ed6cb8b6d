#pragma once

#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gasnet {

// Sectioned plain-text configuration:
//
//   # comment
//   [section]
//   key = value
//   free-form line
//   include = other.file
//
// `include` lines splice the sections of another file (path relative to the
// including file). Every line keeps its origin for error reporting.

struct ConfigLine {
  std::string origin;
  int line = 0;
  std::string text;
};

class ConfigError : public std::runtime_error {
public:
  ConfigError(const ConfigLine& at, const std::string& message)
      : std::runtime_error(at.origin + ":" + std::to_string(at.line) + ": " + message) {}
  explicit ConfigError(const std::string& message) : std::runtime_error(message) {}
};

inline std::string trim(std::string s) {
  auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && ws(static_cast<unsigned char>(s.back()))) s.pop_back();
  std::size_t k = 0;
  while (k < s.size() && ws(static_cast<unsigned char>(s[k]))) ++k;
  return s.substr(k);
}

inline std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

/// Splits "key = value"; returns nullopt if the line has no '='.
inline std::optional<std::pair<std::string, std::string>> split_key_value(const std::string& s) {
  auto eq = s.find('=');
  if (eq == std::string::npos) return std::nullopt;
  return std::make_pair(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
}

inline double parse_double(const ConfigLine& at, const std::string& text) {
  try {
    std::size_t used = 0;
    double v = std::stod(text, &used);
    if (trim(text.substr(used)).empty()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(at, "expected a number, got '" + text + "'");
}

class ConfigDocument {
public:
  struct Section {
    std::string name;
    std::vector<ConfigLine> lines;
  };

  static ConfigDocument parse_file(const std::filesystem::path& path) {
    ConfigDocument doc;
    doc.base_dir_ = path.parent_path();
    doc.read_file(path, 0);
    return doc;
  }

  static ConfigDocument parse_string(const std::string& text, const std::string& origin = "<string>",
                                     const std::filesystem::path& base_dir = {}) {
    ConfigDocument doc;
    doc.base_dir_ = base_dir;
    std::istringstream in(text);
    doc.read_stream(in, origin, base_dir, 0);
    return doc;
  }

  const std::vector<Section>& sections() const { return sections_; }

  bool has(const std::string& name) const { return find(name) != nullptr; }

  /// Lines of a section (all occurrences merged, in file order).
  std::vector<ConfigLine> lines(const std::string& name) const {
    std::vector<ConfigLine> out;
    for (const auto& s : sections_)
      if (s.name == name) out.insert(out.end(), s.lines.begin(), s.lines.end());
    return out;
  }

  /// Key-value entries of a section; later keys override earlier ones.
  std::map<std::string, std::pair<std::string, ConfigLine>> entries(const std::string& name) const {
    std::map<std::string, std::pair<std::string, ConfigLine>> out;
    for (const auto& l : lines(name)) {
      auto kv = split_key_value(l.text);
      if (!kv) throw ConfigError(l, "expected 'key = value' in section [" + name + "]");
      out[kv->first] = {kv->second, l};
    }
    return out;
  }

  const std::filesystem::path& base_dir() const { return base_dir_; }

private:
  const Section* find(const std::string& name) const {
    for (const auto& s : sections_)
      if (s.name == name) return &s;
    return nullptr;
  }

  void read_file(const std::filesystem::path& path, int depth) {
    if (depth > 8) throw ConfigError("include nesting too deep at '" + path.string() + "'");
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path.string() + "'");
    read_stream(in, path.string(), path.parent_path(), depth);
  }

  void read_stream(std::istream& in, const std::string& origin, const std::filesystem::path& dir,
                   int depth) {
    std::string raw;
    int lineno = 0;
    std::string current;
    while (std::getline(in, raw)) {
      ++lineno;
      if (auto h = raw.find('#'); h != std::string::npos) raw.erase(h);
      std::string text = trim(raw);
      if (text.empty()) continue;
      ConfigLine at{origin, lineno, text};
      if (text.front() == '[') {
        if (text.back() != ']') throw ConfigError(at, "unterminated section header");
        current = trim(text.substr(1, text.size() - 2));
        if (current.empty()) throw ConfigError(at, "empty section name");
        sections_.push_back({current, {}});
        continue;
      }
      if (auto kv = split_key_value(text); kv && kv->first == "include") {
        auto target = std::filesystem::path(kv->second);
        if (target.is_relative()) target = dir / target;
        std::string resume = current;
        read_file(target, depth + 1);
        if (!resume.empty()) sections_.push_back({resume, {}});
        current = resume;
        continue;
      }
      if (current.empty()) throw ConfigError(at, "content before the first [section]");
      sections_.back().lines.push_back(at);
    }
  }

  std::vector<Section> sections_;
  std::filesystem::path base_dir_;
};

} // namespace gasnet
