#ifndef QPOT3D_FIELDS_HPP_
#define QPOT3D_FIELDS_HPP_

// Drift fields b(x) for dx = b(x) dt + sqrt(eps) dw, together with the
// benchmark catalog used by the tests and the CLI.

#include <cmath>
#include <algorithm>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qpot3d/linalg.hpp"

namespace qpot3d {

using FieldParams = std::map<std::string, double>;

enum class JacobianPolicy { Exact, FiniteDifference, ZeroSubstitute };

/// Analytic reference quasipotential. When is_false_reference is set the
/// function solves the Hamilton-Jacobi equation but is only trusted at
/// transition states, not as a global reference.
struct ReferencePotential {
  std::function<double(Vec3 const&)> value;
  std::function<Vec3(Vec3 const&)> gradient;
  std::function<bool(Vec3 const&)> valid;
  bool is_false_reference = false;
};

struct VectorField {
  std::string name;
  FieldParams params;
  std::function<Vec3(Vec3 const&)> eval;
  std::optional<std::function<Mat3(Vec3 const&)>> jacobian;
  std::optional<ReferencePotential> exact;
  JacobianPolicy default_policy = JacobianPolicy::Exact;

  Vec3 operator()(Vec3 const& x) const { return eval(x); }
};

struct FieldCatalogEntry {
  std::string identifier;
  Vec3 domain_lo;
  Vec3 domain_hi;
  Vec3 equilibrium;
  /// Parameter names with defaults; NaN marks a required parameter.
  FieldParams defaults;
};

namespace detail {

inline double nan() { return std::numeric_limits<double>::quiet_NaN(); }

inline Mat3 example1_matrix() {
  return Mat3::rows({-3, -4, -1}, {3, -4, -1}, {3, 4, -1});
}

/// Rotation by pi/5 about x3, then pi/8 about x2, then 2pi/3 about x1.
inline Mat3 example23_rotation() {
  return axis_rotation(0, 2.0 * std::numbers::pi / 3.0) *
         axis_rotation(1, std::numbers::pi / 8.0) *
         axis_rotation(2, std::numbers::pi / 5.0);
}

inline Mat3 example23_jacobian(double rho) {
  return Mat3::rows({-1, 0, 0}, {0, -0.5, -rho}, {0, rho, -0.5});
}

inline VectorField linear_field(std::string name, FieldParams params,
                                Mat3 const& J, Mat3 const& Q) {
  VectorField f;
  f.name = std::move(name);
  f.params = std::move(params);
  f.eval = [J](Vec3 const& x) { return J * x; };
  f.jacobian = [J](Vec3 const&) { return J; };
  ReferencePotential ref;
  ref.value = [Q](Vec3 const& x) { return dot(x, Q * x); };
  ref.gradient = [Q](Vec3 const& x) { return 2.0 * (Q * x); };
  ref.valid = [](Vec3 const&) { return true; };
  f.exact = std::move(ref);
  return f;
}

inline VectorField double_well(std::string name, double rho) {
  VectorField f;
  f.name = std::move(name);
  f.params = {{"rho", rho}};
  f.eval = [rho](Vec3 const& x) {
    double const w = x.x * x.x * x.x - x.x;
    return Vec3{-2.0 * w - rho * (x.y + x.z), -x.y + 2.0 * rho * w,
                -x.z + 2.0 * rho * w};
  };
  f.jacobian = [rho](Vec3 const& x) {
    double const dw = 3.0 * x.x * x.x - 1.0;
    return Mat3::rows({-2.0 * dw, -rho, -rho}, {2.0 * rho * dw, -1.0, 0.0},
                      {2.0 * rho * dw, 0.0, -1.0});
  };
  ReferencePotential ref;
  ref.value = [](Vec3 const& x) {
    double const x2 = x.x * x.x;
    return x2 * x2 - 2.0 * x2 + x.y * x.y + x.z * x.z + 1.0;
  };
  ref.gradient = [](Vec3 const& x) {
    return Vec3{4.0 * x.x * x.x * x.x - 4.0 * x.x, 2.0 * x.y, 2.0 * x.z};
  };
  // Trusted inside the level set through the saddle, on the side of the
  // attractor at (-1, 0, 0).
  ref.valid = [v = ref.value](Vec3 const& x) {
    return x.x <= 0.0 && v(x) <= 1.0;
  };
  f.exact = std::move(ref);
  return f;
}

inline VectorField example6() {
  VectorField f;
  f.name = "example6";
  f.eval = [](Vec3 const& x) {
    double const c = 1.0 - x.z * x.z;
    double const r = std::sqrt(x.x * x.x + x.y * x.y);
    return Vec3{c * x.x / r - x.x - x.y, c * x.y / r - x.y + x.x,
                x.z - x.z * x.z * x.z};
  };
  f.default_policy = JacobianPolicy::ZeroSubstitute;
  ReferencePotential ref;
  ref.value = [](Vec3 const& x) {
    double const s = 1.0 - x.z * x.z;
    return 0.5 * s * s;
  };
  ref.gradient = [](Vec3 const& x) {
    return Vec3{0.0, 0.0, -2.0 * x.z * (1.0 - x.z * x.z)};
  };
  ref.valid = [](Vec3 const& x) { return x.z == 0.0; };
  ref.is_false_reference = true;
  f.exact = std::move(ref);
  return f;
}

inline VectorField example7() {
  VectorField f;
  f.name = "example7";
  f.eval = [](Vec3 const& x) {
    double const c = -(x.z + 1.0) * (x.z - 2.0);
    double const r =
        std::pow(x.x * x.x * x.x * x.x + x.y * x.y * x.y * x.y, 0.25);
    return Vec3{c * x.x / r - x.x - x.y * x.y * x.y,
                c * x.y / r + x.x * x.x * x.x - x.y, c * x.z};
  };
  f.default_policy = JacobianPolicy::ZeroSubstitute;
  ReferencePotential ref;
  ref.value = [](Vec3 const& x) {
    double const z = x.z;
    return 0.5 * z * z * z * z - 2.0 * z * z * z / 3.0 - 2.0 * z * z +
           5.0 / 6.0;
  };
  ref.gradient = [](Vec3 const& x) {
    double const z = x.z;
    return Vec3{0.0, 0.0, 2.0 * z * z * z - 2.0 * z * z - 4.0 * z};
  };
  ref.valid = [](Vec3 const& x) { return x.z == 0.0; };
  ref.is_false_reference = true;
  f.exact = std::move(ref);
  return f;
}

inline VectorField genetic_switch(FieldParams const& p) {
  double const a0 = p.at("a0"), a = p.at("a"), g0 = p.at("gamma0"),
               k0 = p.at("k0"), gm = p.at("gamma_m"), bb = p.at("b"),
               gn = p.at("gamma_n"), k1 = p.at("k1"), g1 = p.at("gamma1");
  VectorField f;
  f.name = "genetic_switch";
  f.params = p;
  f.eval = [=](Vec3 const& x) {
    double const m = x.x, n = x.y, d = x.z;
    return Vec3{(a0 * g0 + a * k0 * d) / (g0 + k0 * d) - gm * m,
                bb * m - gn * n - 2.0 * k1 * n * n + 2.0 * g1 * d,
                k1 * n * n - g1 * d};
  };
  f.jacobian = [=](Vec3 const& x) {
    double const n = x.y, d = x.z;
    double const den = g0 + k0 * d;
    double const dfd = (a * k0 * den - (a0 * g0 + a * k0 * d) * k0) /
                       (den * den);
    return Mat3::rows({-gm, 0.0, dfd}, {bb, -gn - 4.0 * k1 * n, 2.0 * g1},
                      {0.0, 2.0 * k1 * n, -g1});
  };
  return f;
}

inline std::map<std::string, std::function<VectorField(FieldParams const&)>>&
custom_registry() {
  static std::map<std::string, std::function<VectorField(FieldParams const&)>>
      reg;
  return reg;
}

inline std::mutex& registry_mutex() {
  static std::mutex mu;
  return mu;
}

}  // namespace detail

/// Equilibria of the genetic switch reported for the published parameters:
/// inactive, active, and the Morse index one saddle between them.
inline Vec3 genetic_switch_inactive() {
  return {0.040206714231704188, 1.6082685692681673, 0.00025865277908958782};
}
inline Vec3 genetic_switch_active() {
  return {29.376860080598071, 1175.0744032239231, 138.07998531120592};
}
inline Vec3 genetic_switch_saddle() { return {10.5829, 423.3173, 17.9198}; }

inline std::vector<FieldCatalogEntry> const& field_catalog() {
  static std::vector<FieldCatalogEntry> const catalog = [] {
    double const req = detail::nan();
    std::vector<FieldCatalogEntry> c;
    c.push_back({"example1", {-1, -1, -1}, {1, 1, 1}, {0, 0, 0}, {}});
    c.push_back({"example2",
                 {-1, -1, -1},
                 {1, 1, 1},
                 {0, 0, 0},
                 {{"rho", std::sqrt(3.0) / 2.0}}});
    c.push_back(
        {"example3", {-1, -1, -1}, {1, 1, 1}, {0, 0, 0}, {{"rho", 5.0}}});
    c.push_back(
        {"example4", {-2, -1, -1}, {0, 1, 1}, {-1, 0, 0}, {{"rho", 1.0}}});
    c.push_back(
        {"example5", {-2, -1, -1}, {0, 1, 1}, {-1, 0, 0}, {{"rho", 10.0}}});
    c.push_back({"example6", {-2, -2, -2}, {2, 2, 2}, {0, 0, -1}, {}});
    c.push_back(
        {"example7", {-2.2, -2.2, -1.5}, {2.2, 2.2, 2.5}, {0, 0, -1}, {}});
    Vec3 const xi = genetic_switch_inactive();
    c.push_back({"genetic_switch",
                 {xi.x - 18.0, xi.y - 450.0, xi.z - 36.0},
                 {xi.x + 18.0, xi.y + 450.0, xi.z + 36.0},
                 xi,
                 {{"a0", req},
                  {"a", req},
                  {"gamma0", req},
                  {"k0", req},
                  {"gamma_m", req},
                  {"b", req},
                  {"gamma_n", req},
                  {"k1", req},
                  {"gamma1", req}}});
    return c;
  }();
  return catalog;
}

inline FieldCatalogEntry const* find_catalog_entry(std::string const& id) {
  for (auto const& e : field_catalog()) {
    if (e.identifier == id) {
      return &e;
    }
  }
  return nullptr;
}

/// Registers a compiled-in drift field under a new identifier.
inline void register_custom_field(
    std::string const& id,
    std::function<VectorField(FieldParams const&)> factory) {
  if (find_catalog_entry(id) != nullptr) {
    throw std::invalid_argument("register_custom_field: '" + id +
                                "' is a built-in identifier");
  }
  std::lock_guard<std::mutex> lock(detail::registry_mutex());
  detail::custom_registry()[id] = std::move(factory);
}

/// Builds a catalog field. Missing optional parameters take their defaults;
/// unknown or non-finite parameters and missing required ones are errors.
inline VectorField builtin_field(std::string const& id,
                                 FieldParams const& params = {}) {
  FieldCatalogEntry const* entry = find_catalog_entry(id);
  if (entry == nullptr) {
    std::function<VectorField(FieldParams const&)> factory;
    {
      std::lock_guard<std::mutex> lock(detail::registry_mutex());
      auto const it = detail::custom_registry().find(id);
      if (it != detail::custom_registry().end()) {
        factory = it->second;
      }
    }
    if (!factory) {
      throw std::invalid_argument("unknown field identifier '" + id + "'");
    }
    return factory(params);
  }

  FieldParams p = entry->defaults;
  for (auto const& [key, value] : params) {
    if (p.find(key) == p.end()) {
      throw std::invalid_argument("field '" + id +
                                  "' has no parameter '" + key + "'");
    }
    if (!std::isfinite(value)) {
      throw std::invalid_argument("field '" + id + "' parameter '" + key +
                                  "' must be finite");
    }
    p[key] = value;
  }
  for (auto const& [key, value] : p) {
    if (std::isnan(value)) {
      throw std::invalid_argument("field '" + id +
                                  "' requires parameter '" + key + "'");
    }
  }

  if (id == "example1") {
    return detail::linear_field(id, p, detail::example1_matrix(),
                                Mat3::diag(3, 4, 1));
  }
  if (id == "example2" || id == "example3") {
    Mat3 const R = detail::example23_rotation();
    Mat3 const Rt = R.transposed();
    Mat3 const J = Rt * detail::example23_jacobian(p.at("rho")) * R;
    Mat3 const Q = Rt * Mat3::diag(1.0, 0.5, 0.5) * R;
    return detail::linear_field(id, p, J, Q);
  }
  if (id == "example4" || id == "example5") {
    return detail::double_well(id, p.at("rho"));
  }
  if (id == "example6") {
    return detail::example6();
  }
  if (id == "example7") {
    return detail::example7();
  }
  for (auto const& [key, value] : p) {
    if (!(value > 0.0)) {
      throw std::invalid_argument("genetic_switch parameter '" + key +
                                  "' must be positive");
    }
  }
  return detail::genetic_switch(p);
}

/// Jacobian of the drift at x under the requested policy.
///
/// FiniteDifference uses central differences with step
/// max(1e-6, 1e-6 |x|). ZeroSubstitute uses the exact Jacobian when one is
/// supplied, finite differences otherwise, and replaces every non-finite
/// entry with zero.
inline Mat3 jacobian_at(VectorField const& field, Vec3 const& x,
                        JacobianPolicy policy) {
  if (!is_finite(x)) {
    throw std::invalid_argument("jacobian_at: point must be finite");
  }
  auto const finite_difference = [&] {
    double const step = std::max(1e-6, 1e-6 * norm(x));
    Mat3 J;
    for (std::size_t c = 0; c < 3; ++c) {
      Vec3 xp = x;
      Vec3 xm = x;
      xp[c] += step;
      xm[c] -= step;
      Vec3 const fp = field.eval(xp);
      Vec3 const fm = field.eval(xm);
      double const width = xp[c] - xm[c];
      for (std::size_t r = 0; r < 3; ++r) {
        J(r, c) = (fp[r] - fm[r]) / width;
      }
    }
    return J;
  };
  switch (policy) {
    case JacobianPolicy::Exact:
      if (!field.jacobian) {
        throw std::invalid_argument("jacobian_at: field '" + field.name +
                                    "' has no exact Jacobian");
      }
      return (*field.jacobian)(x);
    case JacobianPolicy::FiniteDifference:
      return finite_difference();
    case JacobianPolicy::ZeroSubstitute: {
      Mat3 J = finite_difference();
      for (auto& row : J.m) {
        for (double& v : row) {
          if (!std::isfinite(v)) {
            v = 0.0;
          }
        }
      }
      return J;
    }
  }
  throw std::invalid_argument("jacobian_at: unknown policy");
}

/// Jacobian with the field's own default policy, falling back to finite
/// differences when an exact Jacobian is requested but absent.
inline Mat3 jacobian_default(VectorField const& field, Vec3 const& x) {
  JacobianPolicy p = field.default_policy;
  if (p == JacobianPolicy::Exact && !field.jacobian) {
    p = JacobianPolicy::FiniteDifference;
  }
  return jacobian_at(field, x, p);
}

/// Ratio |l| / |grad U / 2| of the rotational to the potential component,
/// with l = grad U / 2 + b. Empty where undefined (grad U = 0).
inline std::optional<double> xi_ratio(VectorField const& field,
                                      Vec3 const& x) {
  if (!field.exact) {
    throw std::invalid_argument("xi_ratio: field '" + field.name +
                                "' has no analytic quasipotential");
  }
  Vec3 const half_grad = 0.5 * field.exact->gradient(x);
  double const potential = norm(half_grad);
  if (potential == 0.0) {
    return std::nullopt;
  }
  return norm(half_grad + field.eval(x)) / potential;
}

/// Warnings for genetic switch parameters whose drift does not vanish at the
/// published equilibria.
inline std::vector<std::string> check_genetic_switch_equilibria(
    VectorField const& field) {
  std::vector<std::string> warnings;
  auto const check = [&](char const* label, Vec3 const& x) {
    Vec3 const b = field.eval(x);
    double const scale = std::max(1.0, norm(x));
    for (std::size_t i = 0; i < 3; ++i) {
      if (!(std::abs(b[i]) <= 1e-3 * std::max(1.0, std::abs(x[i])))) {
        warnings.push_back(std::string("genetic_switch: drift at the ") +
                           label + " equilibrium is " +
                           std::to_string(norm(b)) +
                           " (parameter mismatch; scale " +
                           std::to_string(scale) + ")");
        return;
      }
    }
  };
  check("inactive", genetic_switch_inactive());
  check("active", genetic_switch_active());
  return warnings;
}

}  // namespace qpot3d

#endif  // QPOT3D_FIELDS_HPP_
