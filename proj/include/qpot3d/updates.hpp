#ifndef QPOT3D_UPDATES_HPP_
#define QPOT3D_UPDATES_HPP_

// Local update rules: the geometric action along a straight segment from a
// base point x_lambda to the target x, approximated with the midpoint rule
//
//   f(lambda) = U_lambda + |b_lambda| |x - x_lambda| - b_lambda . (x - x_lambda)
//
// where U_lambda, x_lambda and b_lambda linearly interpolate the base values,
// base vertices and the drift at the midpoints (x_i + x) / 2.
//
// One-point updates have a single base vertex, triangle updates minimize over
// a segment (lambda in [0, 1]) and simplex updates over a triangle
// (lambda1, lambda2 >= 0, lambda1 + lambda2 <= 1).

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

#include "qpot3d/fields.hpp"
#include "qpot3d/linalg.hpp"
#include "qpot3d/lyapunov.hpp"

namespace qpot3d {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Iteration controls for the triangle root finder and the simplex Newton
/// solver.
struct UpdateTolerances {
  double root_width = 1e-12;
  int root_max_iter = 30;
  int newton_max_iter = 20;
  double newton_step = 1e-12;
  double newton_gradient = 1e-12;
  /// Minimal distance of an interior minimizer from every constraint.
  double interior_margin = 1e-12;
};

enum class UpdateOutcome : std::uint8_t {
  Interior,         ///< interior minimizer found
  SignTest,         ///< triangle: f' does not go from negative to positive
  BoundaryRoot,     ///< triangle: root within the margin of an endpoint
  KktSkip,          ///< simplex: warm start already satisfies KKT
  NewtonRejected,   ///< simplex: left the simplex, lost convexity or stalled
  NonFinite,        ///< non-finite drift or geometry
};

struct UpdateProposal {
  double value = kInf;
  /// Barycentric minimizer; one point updates leave it at zero.
  Vec2 lambda;
  bool interior = false;
  double update_length = 0.0;
  UpdateOutcome outcome = UpdateOutcome::NonFinite;
};

/// Local factoring near an equilibrium: inside radius, U = U* + u with
/// U*(x) = (x - x*)^T Q (x - x*), and only u is interpolated linearly.
struct FactoringContext {
  bool enabled = false;
  Vec3 center;
  Mat3 Q;
  double radius = 0.0;

  bool applies(Vec3 const& x) const {
    return enabled && norm(x - center) <= radius;
  }
};

// ---------------------------------------------------------------------------
// One-point update

/// Midpoint-rule action of the segment [x0, x] given the drift at its
/// midpoint. Nonnegative by Cauchy-Schwarz.
inline double segment_action(Vec3 const& bm, Vec3 const& d) {
  return norm(bm) * norm(d) - dot(bm, d);
}

inline UpdateProposal one_point_update(Vec3 const& x0, double U0,
                                       Vec3 const& x,
                                       VectorField const& field) {
  Vec3 const d = x - x0;
  if (d == Vec3{}) {
    throw std::invalid_argument("one_point_update: x coincides with x0");
  }
  Vec3 const bm = field.eval(0.5 * (x + x0));
  UpdateProposal p;
  p.update_length = norm(d);
  if (!is_finite(bm) || !std::isfinite(U0)) {
    return p;
  }
  p.value = U0 + segment_action(bm, d);
  p.interior = true;
  p.outcome = UpdateOutcome::Interior;
  return p;
}

// ---------------------------------------------------------------------------
// Triangle update

/// Segment base [x0, x1] seen from x. X = x0 - x1, B = b_m1 - b_m0 with
/// b_mi the drift at (x_i + x) / 2.
struct TriangleProblem {
  Vec3 dx0;  ///< x - x0
  Vec3 X;    ///< x0 - x1
  Vec3 b0;   ///< drift at (x0 + x) / 2
  Vec3 B;    ///< b_m1 - b_m0
  double U0 = 0.0;
  double dU = 0.0;
  /// Factored quadratic q0 + q1 lambda + q2 lambda^2 / 2 added to U_lambda.
  bool factored = false;
  double q0 = 0.0, q1 = 0.0, q2 = 0.0;

  Vec3 d(double l) const { return dx0 + l * X; }
  Vec3 b(double l) const { return b0 + l * B; }
};

inline TriangleProblem make_triangle(Vec3 const& x0, Vec3 const& x1,
                                     double U0, double U1, Vec3 const& x,
                                     Vec3 const& bm0, Vec3 const& bm1,
                                     FactoringContext const* fac = nullptr) {
  TriangleProblem t;
  t.dx0 = x - x0;
  t.X = x0 - x1;
  t.b0 = bm0;
  t.B = bm1 - bm0;
  if (fac != nullptr && fac->applies(x)) {
    double const s0 = u_star(x0, fac->center, fac->Q).value;
    double const s1 = u_star(x1, fac->center, fac->Q).value;
    Vec3 const e0 = x0 - fac->center;
    t.U0 = U0 - s0;
    t.dU = (U1 - s1) - (U0 - s0);
    t.factored = true;
    t.q0 = dot(e0, fac->Q * e0);
    t.q1 = -2.0 * dot(t.X, fac->Q * e0);
    t.q2 = 2.0 * dot(t.X, fac->Q * t.X);
  } else {
    t.U0 = U0;
    t.dU = U1 - U0;
  }
  return t;
}

/// Interpolated base value at lambda (u_lambda + U*(x_lambda) when factored).
inline double triangle_interpolant(TriangleProblem const& t, double l) {
  double v = t.U0 + l * t.dU;
  if (t.factored) {
    v += t.q0 + l * t.q1 + 0.5 * l * l * t.q2;
  }
  return v;
}

inline double triangle_value(TriangleProblem const& t, double l) {
  return triangle_interpolant(t, l) + segment_action(t.b(l), t.d(l));
}

inline double triangle_derivative(TriangleProblem const& t, double l) {
  Vec3 const d = t.d(l);
  Vec3 const b = t.b(l);
  double const nd = norm(d);
  double const nb = norm(b);
  double g = t.dU + (nd / nb) * dot(t.B, b) + (nb / nd) * dot(t.X, d) -
             dot(t.B, d) - dot(t.X, b);
  if (t.factored) {
    g += t.q1 + l * t.q2;
  }
  return g;
}

/// f''(lambda), the 1x1 Hessian of the triangle update.
inline double triangle_second_derivative(TriangleProblem const& t, double l) {
  Vec3 const d = t.d(l);
  Vec3 const b = t.b(l);
  double const nd = norm(d);
  double const nb = norm(b);
  double const Xd = dot(t.X, d);
  double const Bb = dot(t.B, b);
  double h = 2.0 * Xd * Bb / (nd * nb) + (nd / nb) * dot(t.B, t.B) +
             (nb / nd) * dot(t.X, t.X) - nd / (nb * nb * nb) * Bb * Bb -
             nb / (nd * nd * nd) * Xd * Xd - 2.0 * dot(t.B, t.X);
  if (t.factored) {
    h += t.q2;
  }
  return h;
}

/// Minimizes f over [0, 1]. Only interior minimizers are reported: when
/// f'(0) >= 0 or f'(1) <= 0 the minimum is at an endpoint, where the
/// one-point update already produced it.
inline UpdateProposal triangle_update(TriangleProblem const& t,
                                      UpdateTolerances const& tol = {}) {
  UpdateProposal p;
  double const g0 = triangle_derivative(t, 0.0);
  double const g1 = triangle_derivative(t, 1.0);
  if (!std::isfinite(g0) || !std::isfinite(g1)) {
    p.outcome = UpdateOutcome::NonFinite;
    return p;
  }
  if (!(g0 < 0.0 && g1 > 0.0)) {
    p.outcome = UpdateOutcome::SignTest;
    return p;
  }

  // Dekker's method: secant steps kept inside the bracket, bisection
  // otherwise. b is the best iterate, a the contrapoint.
  double a = 0.0, fa = g0;
  double b = 1.0, fb = g1;
  if (std::abs(fa) < std::abs(fb)) {
    std::swap(a, b);
    std::swap(fa, fb);
  }
  double bprev = a, fbprev = fa;
  for (int it = 0; it < tol.root_max_iter; ++it) {
    if (fb == 0.0 || std::abs(b - a) < tol.root_width) {
      break;
    }
    double const m = 0.5 * (a + b);
    double s = m;
    if (fb != fbprev) {
      s = b - fb * (b - bprev) / (fb - fbprev);
    }
    bool const between = (s > std::min(b, m) && s < std::max(b, m));
    double const next = between ? s : m;
    double const fnext = triangle_derivative(t, next);
    if (!std::isfinite(fnext)) {
      p.outcome = UpdateOutcome::NonFinite;
      return p;
    }
    if ((fnext < 0.0) == (fa < 0.0)) {
      a = b;
      fa = fb;
    }
    bprev = b;
    fbprev = fb;
    b = next;
    fb = fnext;
    if (std::abs(fa) < std::abs(fb)) {
      std::swap(a, b);
      std::swap(fa, fb);
    }
  }

  double const lam = b;
  if (lam <= tol.interior_margin || lam >= 1.0 - tol.interior_margin) {
    p.outcome = UpdateOutcome::BoundaryRoot;
    return p;
  }
  p.value = triangle_value(t, lam);
  if (!std::isfinite(p.value)) {
    p.value = kInf;
    p.outcome = UpdateOutcome::NonFinite;
    return p;
  }
  p.lambda = {lam, 0.0};
  p.interior = true;
  p.update_length = norm(t.d(lam));
  p.outcome = UpdateOutcome::Interior;
  return p;
}

inline UpdateProposal triangle_update(Vec3 const& x0, Vec3 const& x1,
                                      double U0, double U1, Vec3 const& x,
                                      VectorField const& field,
                                      FactoringContext const* fac = nullptr,
                                      UpdateTolerances const& tol = {}) {
  if (x0 == x1 || x == x0 || x == x1) {
    throw std::invalid_argument("triangle_update: degenerate triangle");
  }
  Vec3 const bm0 = field.eval(0.5 * (x0 + x));
  Vec3 const bm1 = field.eval(0.5 * (x1 + x));
  if (!is_finite(bm0) || !is_finite(bm1)) {
    return {};
  }
  return triangle_update(make_triangle(x0, x1, U0, U1, x, bm0, bm1, fac), tol);
}

// ---------------------------------------------------------------------------
// Simplex update

/// Triangle base (x0, x1, x2) seen from x. X = [x0 - x1, x0 - x2] and
/// B = [b_m1 - b_m0, b_m2 - b_m0].
struct SimplexProblem {
  Vec3 dx0;  ///< x - x0
  Mat32 X;
  Vec3 b0;
  Mat32 B;
  double U0 = 0.0;
  Vec2 dU;
  /// Factored quadratic q0 + q1 . lambda + lambda^T q2 lambda / 2.
  bool factored = false;
  double q0 = 0.0;
  Vec2 q1;
  Mat2 q2;

  Vec3 d(Vec2 const& l) const { return dx0 + X.mul(l); }
  Vec3 b(Vec2 const& l) const { return b0 + B.mul(l); }
};

inline SimplexProblem make_simplex(Vec3 const& x0, Vec3 const& x1,
                                   Vec3 const& x2, double U0, double U1,
                                   double U2, Vec3 const& x, Vec3 const& bm0,
                                   Vec3 const& bm1, Vec3 const& bm2,
                                   FactoringContext const* fac = nullptr) {
  SimplexProblem s;
  s.dx0 = x - x0;
  s.X = {x0 - x1, x0 - x2};
  s.b0 = bm0;
  s.B = {bm1 - bm0, bm2 - bm0};
  if (fac != nullptr && fac->applies(x)) {
    double const s0 = u_star(x0, fac->center, fac->Q).value;
    double const s1 = u_star(x1, fac->center, fac->Q).value;
    double const s2 = u_star(x2, fac->center, fac->Q).value;
    Vec3 const e0 = x0 - fac->center;
    s.U0 = U0 - s0;
    s.dU = {(U1 - s1) - (U0 - s0), (U2 - s2) - (U0 - s0)};
    s.factored = true;
    s.q0 = dot(e0, fac->Q * e0);
    s.q1 = -2.0 * s.X.tmul(fac->Q * e0);
    Mat32 const QX{fac->Q * s.X.c1, fac->Q * s.X.c2};
    s.q2 = 2.0 * tmul(s.X, QX);
  } else {
    s.U0 = U0;
    s.dU = {U1 - U0, U2 - U0};
  }
  return s;
}

/// Interpolated base value u_lambda + U*(x_lambda) (plain U_lambda when not
/// factored).
inline double simplex_interpolant(SimplexProblem const& s, Vec2 const& l) {
  double v = s.U0 + s.dU.a * l.a + s.dU.b * l.b;
  if (s.factored) {
    Vec2 const ql = s.q2 * l;
    v += s.q0 + s.q1.a * l.a + s.q1.b * l.b + 0.5 * (l.a * ql.a + l.b * ql.b);
  }
  return v;
}

inline double simplex_value(SimplexProblem const& s, Vec2 const& l) {
  return simplex_interpolant(s, l) + segment_action(s.b(l), s.d(l));
}

/// Thrown when the gradient or Hessian is requested where |x - x_lambda| or
/// |b_lambda| vanishes.
class SingularUpdate : public std::domain_error {
 public:
  SingularUpdate() : std::domain_error("simplex update: singular geometry") {}
};

/// grad f = dU + (|d|/|b|) B^T b + (|b|/|d|) X^T d - B^T d - X^T b
inline Vec2 simplex_gradient(SimplexProblem const& s, Vec2 const& l) {
  Vec3 const d = s.d(l);
  Vec3 const b = s.b(l);
  double const nd = norm(d);
  double const nb = norm(b);
  if (nd == 0.0 || nb == 0.0) {
    throw SingularUpdate();
  }
  Vec2 g = s.dU + (nd / nb) * s.B.tmul(b) + (nb / nd) * s.X.tmul(d) -
           s.B.tmul(d) - s.X.tmul(b);
  if (s.factored) {
    g = g + s.q1 + s.q2 * l;
  }
  return g;
}

inline Mat2 simplex_hessian(SimplexProblem const& s, Vec2 const& l) {
  Vec3 const d = s.d(l);
  Vec3 const b = s.b(l);
  double const nd = norm(d);
  double const nb = norm(b);
  if (nd == 0.0 || nb == 0.0) {
    throw SingularUpdate();
  }
  Vec2 const Xd = s.X.tmul(d);
  Vec2 const Bb = s.B.tmul(b);
  Mat2 const cross_term = outer(Xd, Bb);
  Mat2 const BX = tmul(s.B, s.X);
  Mat2 H = (1.0 / (nd * nb)) * (cross_term + Mat2{cross_term.a11,
                                                  cross_term.a21,
                                                  cross_term.a12,
                                                  cross_term.a22});
  H = H + (nd / nb) * tmul(s.B, s.B) + (nb / nd) * tmul(s.X, s.X);
  H = H + (-nd / (nb * nb * nb)) * outer(Bb, Bb);
  H = H + (-nb / (nd * nd * nd)) * outer(Xd, Xd);
  H = H + (-1.0) * Mat2{2.0 * BX.a11, BX.a12 + BX.a21, BX.a21 + BX.a12,
                        2.0 * BX.a22};
  if (s.factored) {
    H = H + s.q2;
  }
  return H;
}

/// Simplex update warm-started at lambda = (warm_lambda, 0), the interior
/// minimizer of the triangle update on edge (x0, x1).
///
/// When df/dlambda2 >= 0 at the warm start the KKT conditions hold there and
/// the update is skipped. Otherwise Newton's method runs from the warm start;
/// leaving the open simplex, losing positive definiteness, or failing to
/// converge rejects the update.
inline UpdateProposal simplex_update(SimplexProblem const& s,
                                     double warm_lambda,
                                     double warm_value,
                                     UpdateTolerances const& tol = {}) {
  UpdateProposal p;
  p.value = warm_value;
  p.lambda = {warm_lambda, 0.0};

  Vec2 lam{warm_lambda, 0.0};
  Vec2 g;
  try {
    g = simplex_gradient(s, lam);
  } catch (SingularUpdate const&) {
    p.outcome = UpdateOutcome::NewtonRejected;
    return p;
  }
  if (!std::isfinite(g.a) || !std::isfinite(g.b)) {
    p.outcome = UpdateOutcome::NonFinite;
    return p;
  }
  if (g.b >= 0.0) {
    p.outcome = UpdateOutcome::KktSkip;
    return p;
  }

  double const scale =
      std::max(std::abs(simplex_value(s, lam)), std::numeric_limits<double>::min());
  bool converged = false;
  try {
    for (int it = 0; it < tol.newton_max_iter; ++it) {
      Mat2 const H = simplex_hessian(s, lam);
      if (!(H.det() > 0.0 && H.trace() > 0.0)) {
        p.outcome = UpdateOutcome::NewtonRejected;
        return p;
      }
      Vec2 step;
      if (!solve2(H, g, step)) {
        p.outcome = UpdateOutcome::NewtonRejected;
        return p;
      }
      lam = lam - step;
      if (!(lam.a > 0.0 && lam.b > 0.0 && 1.0 - lam.a - lam.b > 0.0)) {
        p.outcome = UpdateOutcome::NewtonRejected;
        return p;
      }
      g = simplex_gradient(s, lam);
      if (!std::isfinite(g.a) || !std::isfinite(g.b)) {
        p.outcome = UpdateOutcome::NonFinite;
        return p;
      }
      if (norm(step) < tol.newton_step ||
          norm(g) < tol.newton_gradient * scale) {
        converged = true;
        break;
      }
    }
  } catch (SingularUpdate const&) {
    p.outcome = UpdateOutcome::NewtonRejected;
    return p;
  }
  double const m = tol.interior_margin;
  if (!converged || !(lam.a > m && lam.b > m && 1.0 - lam.a - lam.b > m)) {
    p.outcome = UpdateOutcome::NewtonRejected;
    return p;
  }
  double const value = simplex_value(s, lam);
  if (!std::isfinite(value)) {
    p.outcome = UpdateOutcome::NonFinite;
    return p;
  }
  p.value = value;
  p.lambda = lam;
  p.interior = true;
  p.update_length = norm(s.d(lam));
  p.outcome = UpdateOutcome::Interior;
  return p;
}

/// Point-and-field form of the simplex update. The warm start must be the
/// interior triangle solution on edge (x0, x1).
inline UpdateProposal simplex_update(Vec3 const& x0, Vec3 const& x1,
                                     Vec3 const& x2, double U0, double U1,
                                     double U2, Vec3 const& x,
                                     VectorField const& field,
                                     UpdateProposal const& warm_start,
                                     FactoringContext const* fac = nullptr,
                                     UpdateTolerances const& tol = {}) {
  if (x == x0 || x == x1 || x == x2 || x0 == x1 || x0 == x2 || x1 == x2) {
    throw std::invalid_argument("simplex_update: degenerate simplex");
  }
  if (!warm_start.interior) {
    throw std::invalid_argument(
        "simplex_update: warm start must be an interior triangle solution");
  }
  Vec3 const bm0 = field.eval(0.5 * (x0 + x));
  Vec3 const bm1 = field.eval(0.5 * (x1 + x));
  Vec3 const bm2 = field.eval(0.5 * (x2 + x));
  if (!is_finite(bm0) || !is_finite(bm1) || !is_finite(bm2)) {
    UpdateProposal p;
    p.value = warm_start.value;
    return p;
  }
  return simplex_update(
      make_simplex(x0, x1, x2, U0, U1, U2, x, bm0, bm1, bm2, fac),
      warm_start.lambda.a, warm_start.value, tol);
}

/// u_lambda + U*(x_lambda) on a simplex base, with u_i = U_i - U*(x_i).
inline double factored_term(Vec3 const& x0, Vec3 const& x1, Vec3 const& x2,
                            double U0, double U1, double U2, Vec2 const& l,
                            FactoringContext const& fac) {
  double const u0 = U0 - u_star(x0, fac.center, fac.Q).value;
  double const u1 = U1 - u_star(x1, fac.center, fac.Q).value;
  double const u2 = U2 - u_star(x2, fac.center, fac.Q).value;
  Vec3 const xl = x0 + l.a * (x1 - x0) + l.b * (x2 - x0);
  return u0 + l.a * (u1 - u0) + l.b * (u2 - u0) +
         u_star(xl, fac.center, fac.Q).value;
}

}  // namespace qpot3d

#endif  // QPOT3D_UPDATES_HPP_
