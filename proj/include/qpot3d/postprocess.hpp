#ifndef QPOT3D_POSTPROCESS_HPP_
#define QPOT3D_POSTPROCESS_HPP_

// Analysis of a solved quasipotential: interpolation, gradients, minimum
// action paths, action integrals, error metrics, convergence fits and
// escape-time estimates.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qpot3d/errors.hpp"
#include "qpot3d/fields.hpp"
#include "qpot3d/grid.hpp"
#include "qpot3d/linalg.hpp"
#include "qpot3d/solver.hpp"
#include "qpot3d/updates.hpp"

namespace qpot3d {

using Path3 = std::vector<Vec3>;

namespace detail {

struct Cell {
  Index3 base;
  Vec3 frac;
};

/// Cell containing p and the local coordinates in [0, 1]^3.
inline Cell locate(Grid3 const& g, Vec3 const& p) {
  Vec3 const s = g.to_index_space(p);
  std::array<double, 3> const sv{s.x, s.y, s.z};
  std::array<int, 3> base{};
  std::array<double, 3> fr{};
  double const slack = 1e-9;
  for (int a = 0; a < 3; ++a) {
    auto const ua = static_cast<std::size_t>(a);
    int const n = g.count(a);
    double v = sv[ua];
    if (!(v >= -slack && v <= (n - 1) + slack)) {
      throw DomainError("point outside the mesh");
    }
    v = std::clamp(v, 0.0, static_cast<double>(n - 1));
    int b = static_cast<int>(std::floor(v));
    b = std::min(b, n - 2);
    base[ua] = b;
    fr[ua] = v - b;
  }
  return {{base[0], base[1], base[2]}, {fr[0], fr[1], fr[2]}};
}

template <class F>
auto trilinear(Cell const& c, F&& corner) {
  using T = decltype(corner(Index3{}));
  T acc{};
  for (int dk = 0; dk < 2; ++dk) {
    for (int dj = 0; dj < 2; ++dj) {
      for (int di = 0; di < 2; ++di) {
        double const w = (di ? c.frac.x : 1.0 - c.frac.x) *
                         (dj ? c.frac.y : 1.0 - c.frac.y) *
                         (dk ? c.frac.z : 1.0 - c.frac.z);
        acc = acc + w * corner(c.base + Index3{di, dj, dk});
      }
    }
  }
  return acc;
}

}  // namespace detail

/// Trilinear interpolation of U. Throws DomainError outside the mesh or in a
/// cell with an unreached corner.
inline double interpolate(QuasipotentialField const& f, Vec3 const& p) {
  detail::Cell const c = detail::locate(f.grid, p);
  return detail::trilinear(c, [&](Index3 const& t) {
    double const v = f.at(t);
    if (!std::isfinite(v)) {
      throw DomainError("interpolation cell is not fully reached");
    }
    return v;
  });
}

/// Central differences at a reached node, one-sided at grid faces or next to
/// an unreached node. Components without any usable neighbor are NaN.
inline Vec3 node_gradient(QuasipotentialField const& f, Index3 const& t) {
  Grid3 const& g = f.grid;
  double const u0 = f.at(t);
  std::array<double, 3> out{};
  std::array<double, 3> const h{g.steps().x, g.steps().y, g.steps().z};
  for (int a = 0; a < 3; ++a) {
    auto const ua = static_cast<std::size_t>(a);
    Index3 e{};
    (a == 0 ? e.i : a == 1 ? e.j : e.k) = 1;
    Index3 const tp = t + e;
    Index3 const tm = t - e;
    double const up = g.contains(tp) ? f.at(tp) : kInf;
    double const um = g.contains(tm) ? f.at(tm) : kInf;
    bool const okp = std::isfinite(up);
    bool const okm = std::isfinite(um);
    if (okp && okm) {
      out[ua] = (up - um) / (2.0 * h[ua]);
    } else if (okp) {
      out[ua] = (up - u0) / h[ua];
    } else if (okm) {
      out[ua] = (u0 - um) / h[ua];
    } else {
      out[ua] = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return {out[0], out[1], out[2]};
}

/// Trilinear interpolation of node gradients.
inline Vec3 grid_gradient(QuasipotentialField const& f, Vec3 const& p) {
  detail::Cell const c = detail::locate(f.grid, p);
  Vec3 const g = detail::trilinear(c, [&](Index3 const& t) {
    if (!std::isfinite(f.at(t))) {
      throw DomainError("gradient cell is not fully reached");
    }
    return node_gradient(f, t);
  });
  if (!is_finite(g)) {
    throw DomainError("gradient undefined at point");
  }
  return g;
}

enum class TraceStop { NearAttractor, Stalled, LeftRegion, MaxSteps };

inline char const* to_string(TraceStop s) {
  switch (s) {
    case TraceStop::NearAttractor:
      return "near_attractor";
    case TraceStop::Stalled:
      return "stalled";
    case TraceStop::LeftRegion:
      return "left_region";
    case TraceStop::MaxSteps:
      return "max_steps";
  }
  return "unknown";
}

struct TraceResult {
  /// Ordered from the attractor end to the start point.
  Path3 path;
  TraceStop stop = TraceStop::MaxSteps;
};

struct TraceOptions {
  double step = 0.0;  ///< arclength step; 0 means half the largest mesh step
  double stall = 1e-8;
  std::size_t max_steps = 1000000;
};

/// Minimum action path from start back to the attractor, found by RK4
/// integration of psi' = -(b + grad U) / |b + grad U| with a fixed arclength
/// step. When the trace ends within one mesh step of the equilibrium, the
/// equilibrium itself is appended.
inline TraceResult trace_map(QuasipotentialField const& f,
                             VectorField const& field, Vec3 const& start,
                             TraceOptions opt = {}) {
  (void)interpolate(f, start);
  double const h = f.grid.max_step();
  double const ds = opt.step > 0.0 ? opt.step : 0.5 * h;

  bool stalled = false;
  auto rhs = [&](Vec3 const& p) -> Vec3 {
    Vec3 const v = field.eval(p) + grid_gradient(f, p);
    double const n = norm(v);
    if (!(n >= opt.stall)) {
      stalled = true;
      return {};
    }
    return (-1.0 / n) * v;
  };

  TraceResult out;
  out.path.push_back(start);
  Vec3 p = start;
  for (std::size_t it = 0;; ++it) {
    if (norm(p - f.equilibrium) <= h) {
      out.stop = TraceStop::NearAttractor;
      if (p != f.equilibrium) {
        out.path.push_back(f.equilibrium);
      }
      break;
    }
    if (it >= opt.max_steps) {
      out.stop = TraceStop::MaxSteps;
      break;
    }
    try {
      Vec3 const k1 = rhs(p);
      Vec3 const k2 = rhs(p + (0.5 * ds) * k1);
      Vec3 const k3 = rhs(p + (0.5 * ds) * k2);
      Vec3 const k4 = rhs(p + ds * k3);
      if (stalled) {
        out.stop = TraceStop::Stalled;
        break;
      }
      Vec3 const next = p + (ds / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      (void)interpolate(f, next);
      p = next;
    } catch (DomainError const&) {
      out.stop = TraceStop::LeftRegion;
      break;
    }
    out.path.push_back(p);
  }
  std::reverse(out.path.begin(), out.path.end());
  return out;
}

/// U at the first path point plus the midpoint-rule geometric action of
/// every segment.
inline double geometric_action_along(VectorField const& field,
                                     Path3 const& path, double U_start) {
  if (path.size() < 2) {
    throw std::invalid_argument("geometric_action_along: need two points");
  }
  double s = U_start;
  for (std::size_t i = 1; i < path.size(); ++i) {
    Vec3 const d = path[i] - path[i - 1];
    s += segment_action(field.eval(0.5 * (path[i] + path[i - 1])), d);
  }
  return s;
}

inline std::vector<double> arclength(Path3 const& path) {
  std::vector<double> s(path.size(), 0.0);
  for (std::size_t i = 1; i < path.size(); ++i) {
    s[i] = s[i - 1] + norm(path[i] - path[i - 1]);
  }
  return s;
}

struct ErrorMetrics {
  double e_max = 0.0;
  double e_rms = 0.0;
  double e_nm = 0.0;
  double e_nr = 0.0;
  double u_max = 0.0;
  double u_rms = 0.0;
  std::size_t nodes = 0;
};

/// Errors over reached nodes where region(x) holds. Normalizations use the
/// exact values on the same nodes.
inline ErrorMetrics error_metrics(
    QuasipotentialField const& f, std::function<double(Vec3 const&)> const& exact,
    std::function<bool(Vec3 const&)> const& region) {
  ErrorMetrics m;
  double sq = 0.0;
  double usq = 0.0;
  for (std::size_t n = 0; n < f.grid.size(); ++n) {
    if (!f.reached(n)) {
      continue;
    }
    Vec3 const x = f.grid.coords(n);
    if (region && !region(x)) {
      continue;
    }
    double const ue = exact(x);
    double const e = std::abs(f.U[n] - ue);
    m.e_max = std::max(m.e_max, e);
    m.u_max = std::max(m.u_max, std::abs(ue));
    sq += e * e;
    usq += ue * ue;
    ++m.nodes;
  }
  if (m.nodes == 0) {
    throw DomainError("error_metrics: empty region");
  }
  auto const cnt = static_cast<double>(m.nodes);
  m.e_rms = std::sqrt(sq / cnt);
  m.u_rms = std::sqrt(usq / cnt);
  m.e_nm = m.u_max > 0.0 ? m.e_max / m.u_max : 0.0;
  m.e_nr = m.u_rms > 0.0 ? m.e_rms / m.u_rms : 0.0;
  return m;
}

/// Errors against the field's reference potential on its validity region,
/// further restricted by an optional predicate.
inline ErrorMetrics error_metrics(
    QuasipotentialField const& f, ReferencePotential const& ref,
    std::function<bool(Vec3 const&)> const& extra = {}) {
  return error_metrics(f, ref.value, [&](Vec3 const& x) {
    return ref.valid(x) && (!extra || extra(x));
  });
}

struct PowerFit {
  double C = 0.0;
  double q = 0.0;
};

/// Least squares fit of log E = log C + q log h.
inline PowerFit convergence_fit(
    std::vector<std::pair<double, double>> const& samples) {
  if (samples.size() < 2) {
    throw std::invalid_argument("convergence_fit: need at least two samples");
  }
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (auto const& [h, e] : samples) {
    if (!(h > 0.0) || !(e > 0.0)) {
      throw std::invalid_argument("convergence_fit: samples must be positive");
    }
    double const x = std::log(h);
    double const y = std::log(e);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  auto const n = static_cast<double>(samples.size());
  double const den = n * sxx - sx * sx;
  if (den == 0.0) {
    throw std::invalid_argument("convergence_fit: all h are equal");
  }
  double const q = (n * sxy - sx * sy) / den;
  double const logC = (sy - q * sx) / n;
  return {std::exp(logC), q};
}

/// Unnormalized invariant density exp(-U(x) / epsilon).
inline double invariant_measure_estimate(QuasipotentialField const& f,
                                         double epsilon, Vec3 const& p) {
  if (!(epsilon > 0.0)) {
    throw std::invalid_argument("epsilon must be positive");
  }
  return std::exp(-interpolate(f, p) / epsilon);
}

/// Largest real eigenvalue of J when it is positive. Throws when J has no
/// positive real eigenvalue.
inline double positive_eigenvalue(Mat3 const& J) {
  double const c2 = -J.trace();
  double const c1 = J(0, 0) * J(1, 1) - J(0, 1) * J(1, 0) + J(0, 0) * J(2, 2) -
                    J(0, 2) * J(2, 0) + J(1, 1) * J(2, 2) - J(1, 2) * J(2, 1);
  double const c0 = -J.det();
  auto p = [&](double s) { return ((s + c2) * s + c1) * s + c0; };
  double hi = 1.0;
  for (auto const& row : J.m) {
    double r = 0.0;
    for (double v : row) {
      r += std::abs(v);
    }
    hi = std::max(hi, r + 1.0);
  }
  // Largest real root lies in (0, hi] iff p changes sign there; scan from the
  // top so the largest root is bracketed.
  int const pieces = 4096;
  for (int i = pieces; i > 0; --i) {
    double a = hi * (i - 1) / pieces;
    double b = hi * i / pieces;
    if (a <= 0.0) {
      a = 0.0;
    }
    double pa = p(a);
    double const pb = p(b);
    if (pa == 0.0 && a > 0.0) {
      return a;
    }
    if ((pa < 0.0) != (pb < 0.0)) {
      for (int k = 0; k < 200 && b - a > 1e-15 * b; ++k) {
        double const m = 0.5 * (a + b);
        double const pm = p(m);
        if ((pm < 0.0) == (pa < 0.0)) {
          a = m;
          pa = pm;
        } else {
          b = m;
        }
      }
      double const root = 0.5 * (a + b);
      if (root > 0.0) {
        return root;
      }
    }
  }
  throw DomainError("Jacobian has no positive real eigenvalue");
}

/// Hessian of a quadratic least squares fit of U over the 3x3x3 stencil at
/// the node nearest to p.
inline Mat3 fitted_hessian(QuasipotentialField const& f, Vec3 const& p) {
  Grid3 const& g = f.grid;
  Vec3 const s = g.to_index_space(p);
  Index3 c{static_cast<int>(std::lround(s.x)), static_cast<int>(std::lround(s.y)),
           static_cast<int>(std::lround(s.z))};
  c.i = std::clamp(c.i, 1, g.nx() - 2);
  c.j = std::clamp(c.j, 1, g.ny() - 2);
  c.k = std::clamp(c.k, 1, g.nz() - 2);
  Vec3 const xc = g.coords(c);
  // Unknowns: c, gx, gy, gz, hxx, hyy, hzz, hxy, hxz, hyz with
  // U ~ c + g.d + (hxx dx^2 + hyy dy^2 + hzz dz^2)/2 + hxy dx dy + ...
  std::vector<double> ata(100, 0.0);
  std::vector<double> atb(10, 0.0);
  for (int dk = -1; dk <= 1; ++dk) {
    for (int dj = -1; dj <= 1; ++dj) {
      for (int di = -1; di <= 1; ++di) {
        Index3 const t = c + Index3{di, dj, dk};
        double const u = f.at(t);
        if (!std::isfinite(u)) {
          throw DomainError("Hessian fit stencil is not fully reached");
        }
        Vec3 const d = g.coords(t) - xc;
        std::array<double, 10> const row{1.0,
                                         d.x,
                                         d.y,
                                         d.z,
                                         0.5 * d.x * d.x,
                                         0.5 * d.y * d.y,
                                         0.5 * d.z * d.z,
                                         d.x * d.y,
                                         d.x * d.z,
                                         d.y * d.z};
        for (std::size_t r = 0; r < 10; ++r) {
          atb[r] += row[r] * u;
          for (std::size_t q = 0; q < 10; ++q) {
            ata[r * 10 + q] += row[r] * row[q];
          }
        }
      }
    }
  }
  std::vector<double> sol;
  try {
    sol = solve_dense(std::move(ata), std::move(atb));
  } catch (std::domain_error const&) {
    throw DomainError("singular Hessian fit");
  }
  return Mat3::rows({sol[4], sol[7], sol[8]}, {sol[7], sol[5], sol[9]},
                    {sol[8], sol[9], sol[6]});
}

/// Divergence of l = grad U / 2 + b by central differences with step d.
inline double rotational_divergence(QuasipotentialField const& f,
                                    VectorField const& field, Vec3 const& p,
                                    double d) {
  auto l = [&](Vec3 const& x) { return 0.5 * grid_gradient(f, x) + field.eval(x); };
  double const dx = (l(p + Vec3{d, 0, 0}).x - l(p - Vec3{d, 0, 0}).x) / (2 * d);
  double const dy = (l(p + Vec3{0, d, 0}).y - l(p - Vec3{0, d, 0}).y) / (2 * d);
  double const dz = (l(p + Vec3{0, 0, d}).z - l(p - Vec3{0, 0, d}).z) / (2 * d);
  return dx + dy + dz;
}

struct EscapeTimeEstimate {
  double lambda_plus = 0.0;
  double det_hessian_saddle = 0.0;
  double det_hessian_equilibrium = 0.0;
  double path_integral = 0.0;
  double saddle_value = 0.0;
  /// log of the estimated expected escape time
  double log_time = 0.0;
  double time = 0.0;
  /// The saddle Hessian comes from a local fit of the computed grid.
  bool hessian_fitted = true;
};

/// Expected escape time through the saddle x_s:
///   2 pi / lambda_+ sqrt(|det H(x_s)| / det H(x*)) exp(int div l ds)
///   exp(U(x_s) / epsilon)
/// with H(x*) = 2 Q and H(x_s) fitted from the grid. map_path runs from x*
/// to x_s.
inline EscapeTimeEstimate br_prefactor(QuasipotentialField const& f,
                                       VectorField const& field,
                                       Vec3 const& x_s, Path3 const& map_path,
                                       double epsilon,
                                       JacobianPolicy policy =
                                           JacobianPolicy::FiniteDifference) {
  if (!(epsilon > 0.0)) {
    throw std::invalid_argument("epsilon must be positive");
  }
  EscapeTimeEstimate e;
  e.lambda_plus = positive_eigenvalue(jacobian_at(field, x_s, policy));
  Mat3 const Hs = fitted_hessian(f, x_s);
  e.det_hessian_saddle = Hs.det();
  if (e.det_hessian_saddle == 0.0 || !std::isfinite(e.det_hessian_saddle)) {
    throw DomainError("singular saddle Hessian");
  }
  e.det_hessian_equilibrium = (2.0 * f.Q).det();
  double const d = 0.5 * f.grid.min_step();
  for (std::size_t i = 1; i < map_path.size(); ++i) {
    Vec3 const m = 0.5 * (map_path[i] + map_path[i - 1]);
    double const ds = norm(map_path[i] - map_path[i - 1]);
    double div = 0.0;
    try {
      div = rotational_divergence(f, field, m, d);
    } catch (DomainError const&) {
      continue;
    }
    e.path_integral += div * ds;
  }
  e.saddle_value = interpolate(f, x_s);
  e.log_time = std::log(2.0 * std::numbers::pi / e.lambda_plus) +
               0.5 * std::log(std::abs(e.det_hessian_saddle) /
                              e.det_hessian_equilibrium) +
               e.path_integral + e.saddle_value / epsilon;
  e.time = std::exp(e.log_time);
  return e;
}

}  // namespace qpot3d

#endif  // QPOT3D_POSTPROCESS_HPP_
