#ifndef QPOT3D_CONFIG_HPP_
#define QPOT3D_CONFIG_HPP_

// Run configuration: one JSON document, optionally patched by dotted
// key=value overrides from the command line.

#include <array>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "qpot3d/errors.hpp"
#include "qpot3d/fields.hpp"
#include "qpot3d/grid.hpp"
#include "qpot3d/solver.hpp"

namespace qpot3d {

using json = nlohmann::json;

struct ConvergencePlan {
  std::vector<int> N;
  std::vector<int> K;  ///< empty: guideline K for every N
};

struct SlicePlan {
  int axis = 0;
  double coordinate = 0.0;
};

struct RunConfig {
  std::string field_id = "example1";
  FieldParams params;
  Vec3 lo{-1, -1, -1};
  Vec3 hi{1, 1, 1};
  std::array<int, 3> n{33, 33, 33};
  Vec3 equilibrium;
  std::optional<int> K;
  bool factoring = false;
  double factoring_radius = 0.1;
  Termination termination = Termination::BoundaryHit;
  bool exact = true;
  std::vector<Vec3> map_starts;
  std::string output = "out";
  ConvergencePlan convergence;
  SlicePlan slice;
  /// The document after overrides, echoed into metadata.
  json source;

  Grid3 grid() const { return Grid3::from_box(lo, hi, n[0], n[1], n[2]); }

  int resolved_K() const;
  SolverConfig solver_config() const {
    SolverConfig c;
    c.K = resolved_K();
    c.factoring = factoring;
    c.factoring_radius = factoring_radius;
    c.termination = termination;
    return c;
  }
};

/// K guideline by mesh size: the entry for the nearest tabulated N.
inline int guideline_K(int N) {
  static constexpr std::array<std::array<int, 2>, 5> table{
      {{33, 4}, {65, 6}, {129, 8}, {257, 10}, {513, 14}}};
  int best = table[0][1];
  int dist = std::abs(N - table[0][0]);
  for (auto const& [n, k] : table) {
    if (std::abs(N - n) < dist) {
      dist = std::abs(N - n);
      best = k;
    }
  }
  return best;
}

inline int RunConfig::resolved_K() const {
  if (K) {
    return *K;
  }
  int const nmax = std::max(n[0], std::max(n[1], n[2]));
  int const nmin = std::min(n[0], std::min(n[1], n[2]));
  return std::max(1, std::min(guideline_K(nmax), nmin / 2));
}

namespace detail {

inline Vec3 vec3_from(json const& j, std::string const& key) {
  if (!j.is_array() || j.size() != 3) {
    throw ConfigError("'" + key + "' must be an array of three numbers");
  }
  std::array<double, 3> v{};
  for (std::size_t i = 0; i < 3; ++i) {
    if (!j[i].is_number()) {
      throw ConfigError("'" + key + "' must be an array of three numbers");
    }
    v[i] = j[i].get<double>();
    if (!std::isfinite(v[i])) {
      throw ConfigError("'" + key + "' must be finite");
    }
  }
  return {v[0], v[1], v[2]};
}

inline int int_from(json const& j, std::string const& key) {
  if (!j.is_number_integer()) {
    throw ConfigError("'" + key + "' must be an integer");
  }
  return j.get<int>();
}

inline double number_from(json const& j, std::string const& key) {
  if (!j.is_number()) {
    throw ConfigError("'" + key + "' must be a number");
  }
  return j.get<double>();
}

inline bool bool_from(json const& j, std::string const& key) {
  if (!j.is_boolean()) {
    throw ConfigError("'" + key + "' must be true or false");
  }
  return j.get<bool>();
}

inline std::vector<int> int_list(json const& j, std::string const& key) {
  std::vector<int> out;
  if (j.is_number_integer()) {
    out.push_back(j.get<int>());
    return out;
  }
  if (!j.is_array()) {
    throw ConfigError("'" + key + "' must be an integer or a list of integers");
  }
  for (auto const& v : j) {
    out.push_back(int_from(v, key));
  }
  return out;
}

inline void check_keys(json const& j, std::string const& where,
                       std::vector<std::string> const& allowed) {
  if (!j.is_object()) {
    throw ConfigError("'" + where + "' must be an object");
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      throw ConfigError("unknown key '" + (where.empty() ? "" : where + ".") +
                        it.key() + "'");
    }
  }
}

inline int axis_from(json const& j) {
  if (j.is_number_integer()) {
    int const a = j.get<int>();
    if (a >= 0 && a < 3) {
      return a;
    }
  } else if (j.is_string()) {
    std::string const s = j.get<std::string>();
    if (s == "x") return 0;
    if (s == "y") return 1;
    if (s == "z") return 2;
  }
  throw ConfigError("'slice.axis' must be x, y, z or 0..2");
}

}  // namespace detail

/// Applies "a.b.c=value". The value is parsed as JSON when possible and kept
/// as a string otherwise.
inline void apply_override(json& doc, std::string const& assignment) {
  auto const eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not key=value");
  }
  std::string const key = assignment.substr(0, eq);
  std::string const text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) {
    value = text;
  }
  json* node = &doc;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) {
      throw ConfigError("override key '" + key + "' has an empty component");
    }
    parts.push_back(part);
  }
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object()) {
      throw ConfigError("override key '" + key + "' crosses a non-object");
    }
    node = &(*node)[parts[i]];
    if (node->is_null()) {
      *node = json::object();
    }
  }
  if (!node->is_object()) {
    throw ConfigError("override key '" + key + "' crosses a non-object");
  }
  (*node)[parts.back()] = value;
}

/// Builds and validates a RunConfig. Missing domain and equilibrium come from
/// the field catalog.
inline RunConfig parse_config(json const& doc) {
  using namespace detail;
  check_keys(doc, "",
             {"field", "domain", "mesh", "equilibrium", "K", "factoring",
              "termination", "exact", "map_starts", "output", "convergence",
              "slice"});
  RunConfig c;
  c.source = doc;

  if (doc.contains("field")) {
    json const& f = doc["field"];
    if (f.is_string()) {
      c.field_id = f.get<std::string>();
    } else {
      check_keys(f, "field", {"id", "params"});
      if (!f.contains("id") || !f["id"].is_string()) {
        throw ConfigError("'field.id' must be a string");
      }
      c.field_id = f["id"].get<std::string>();
      if (f.contains("params")) {
        if (!f["params"].is_object()) {
          throw ConfigError("'field.params' must be an object");
        }
        for (auto it = f["params"].begin(); it != f["params"].end(); ++it) {
          c.params[it.key()] = number_from(it.value(), "field.params." + it.key());
        }
      }
    }
  }
  FieldCatalogEntry const* entry = find_catalog_entry(c.field_id);
  if (entry != nullptr) {
    c.lo = entry->domain_lo;
    c.hi = entry->domain_hi;
    c.equilibrium = entry->equilibrium;
  }
  try {
    (void)builtin_field(c.field_id, c.params);
  } catch (std::invalid_argument const& e) {
    throw ConfigError(e.what());
  }

  if (doc.contains("domain")) {
    check_keys(doc["domain"], "domain", {"lo", "hi"});
    if (doc["domain"].contains("lo")) c.lo = vec3_from(doc["domain"]["lo"], "domain.lo");
    if (doc["domain"].contains("hi")) c.hi = vec3_from(doc["domain"]["hi"], "domain.hi");
  } else if (entry == nullptr) {
    throw ConfigError("'domain' is required for custom fields");
  }
  if (!(c.lo.x < c.hi.x && c.lo.y < c.hi.y && c.lo.z < c.hi.z)) {
    throw ConfigError("domain box is degenerate");
  }

  if (doc.contains("mesh")) {
    json const& m = doc["mesh"];
    json const& nj = m.is_object() ? (check_keys(m, "mesh", {"n"}), m.value("n", json()))
                                   : m;
    if (nj.is_number_integer()) {
      int const v = nj.get<int>();
      c.n = {v, v, v};
    } else if (nj.is_array() && nj.size() == 3) {
      c.n = {int_from(nj[0], "mesh.n"), int_from(nj[1], "mesh.n"),
             int_from(nj[2], "mesh.n")};
    } else {
      throw ConfigError("'mesh.n' must be an integer or three integers");
    }
  }
  for (int v : c.n) {
    if (v < 3) {
      throw ConfigError("mesh counts must be at least 3");
    }
  }

  if (doc.contains("equilibrium")) {
    c.equilibrium = vec3_from(doc["equilibrium"], "equilibrium");
  } else if (entry == nullptr) {
    throw ConfigError("'equilibrium' is required for custom fields");
  }
  if (c.equilibrium.x < c.lo.x || c.equilibrium.x > c.hi.x ||
      c.equilibrium.y < c.lo.y || c.equilibrium.y > c.hi.y ||
      c.equilibrium.z < c.lo.z || c.equilibrium.z > c.hi.z) {
    throw ConfigError("equilibrium lies outside the domain");
  }

  if (doc.contains("K") && !doc["K"].is_null()) {
    c.K = int_from(doc["K"], "K");
  }
  if (doc.contains("factoring")) {
    json const& f = doc["factoring"];
    if (f.is_boolean()) {
      c.factoring = f.get<bool>();
    } else {
      check_keys(f, "factoring", {"enabled", "radius"});
      if (f.contains("enabled")) c.factoring = bool_from(f["enabled"], "factoring.enabled");
      if (f.contains("radius")) c.factoring_radius = number_from(f["radius"], "factoring.radius");
    }
  }
  if (doc.contains("termination")) {
    if (!doc["termination"].is_string()) {
      throw ConfigError("'termination' must be boundary_hit or exhaust");
    }
    std::string const t = doc["termination"].get<std::string>();
    if (t == "boundary_hit") {
      c.termination = Termination::BoundaryHit;
    } else if (t == "exhaust") {
      c.termination = Termination::Exhaust;
    } else {
      throw ConfigError("'termination' must be boundary_hit or exhaust");
    }
  }
  if (doc.contains("exact")) {
    c.exact = bool_from(doc["exact"], "exact");
  }
  if (doc.contains("map_starts")) {
    if (!doc["map_starts"].is_array()) {
      throw ConfigError("'map_starts' must be a list of points");
    }
    for (auto const& p : doc["map_starts"]) {
      c.map_starts.push_back(vec3_from(p, "map_starts"));
    }
  }
  if (doc.contains("output")) {
    if (!doc["output"].is_string()) {
      throw ConfigError("'output' must be a string");
    }
    c.output = doc["output"].get<std::string>();
  }
  if (doc.contains("convergence")) {
    json const& cv = doc["convergence"];
    check_keys(cv, "convergence", {"N", "K"});
    if (cv.contains("N")) c.convergence.N = int_list(cv["N"], "convergence.N");
    if (cv.contains("K")) c.convergence.K = int_list(cv["K"], "convergence.K");
  }
  if (doc.contains("slice")) {
    json const& s = doc["slice"];
    check_keys(s, "slice", {"axis", "coordinate"});
    if (s.contains("axis")) c.slice.axis = axis_from(s["axis"]);
    if (s.contains("coordinate")) c.slice.coordinate = number_from(s["coordinate"], "slice.coordinate");
  }

  try {
    c.solver_config().validate(c.grid());
  } catch (std::invalid_argument const& e) {
    throw ConfigError(e.what());
  }
  return c;
}

inline json read_json_file(std::string const& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config '" + path + "'");
  }
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) {
    throw ConfigError("config '" + path + "' is not valid JSON");
  }
  return doc;
}

}  // namespace qpot3d

#endif  // QPOT3D_CONFIG_HPP_
