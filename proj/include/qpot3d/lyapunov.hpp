#ifndef QPOT3D_LYAPUNOV_HPP_
#define QPOT3D_LYAPUNOV_HPP_

// Quadratic approximation of the quasipotential near an asymptotically stable
// equilibrium x*: U(x) ~ (x - x*)^T Q (x - x*), where Q^{-1} solves the
// Lyapunov equation J P + P J^T = -2 I for the Jacobian J at x*.

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "qpot3d/errors.hpp"
#include "qpot3d/fields.hpp"
#include "qpot3d/grid.hpp"
#include "qpot3d/linalg.hpp"

namespace qpot3d {

struct QuasipotentialMatrix {
  Mat3 Q;
  Mat3 J;
};

/// Routh-Hurwitz test on the characteristic polynomial
/// s^3 + c2 s^2 + c1 s + c0 of J: every eigenvalue has negative real part
/// iff c2 > 0, c0 > 0 and c2 c1 > c0.
inline bool is_hurwitz_stable(Mat3 const& J) {
  double const c2 = -J.trace();
  double const c1 = J(0, 0) * J(1, 1) - J(0, 1) * J(1, 0) +
                    J(0, 0) * J(2, 2) - J(0, 2) * J(2, 0) +
                    J(1, 1) * J(2, 2) - J(1, 2) * J(2, 1);
  double const c0 = -J.det();
  return c2 > 0.0 && c0 > 0.0 && c2 * c1 > c0;
}

inline Mat3 symmetrized(Mat3 const& a) { return 0.5 * (a + a.transposed()); }

/// Solves J P + P J^T = -2 I as a 9x9 linear system.
inline Mat3 solve_lyapunov(Mat3 const& J) {
  for (auto const& row : J.m) {
    for (double v : row) {
      if (!std::isfinite(v)) {
        throw std::invalid_argument("solve_lyapunov: non-finite Jacobian");
      }
    }
  }
  if (!is_hurwitz_stable(J)) {
    throw StabilityError(
        "solve_lyapunov: Jacobian has an eigenvalue with nonnegative real "
        "part");
  }
  // Unknown P(r, c) sits at r * 3 + c. Row (i, j) of the system is
  // sum_k J(i,k) P(k,j) + sum_k P(i,k) J(j,k) = -2 delta_ij.
  std::vector<double> A(81, 0.0);
  std::vector<double> rhs(9, 0.0);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      std::size_t const row = i * 3 + j;
      for (std::size_t k = 0; k < 3; ++k) {
        A[row * 9 + k * 3 + j] += J(i, k);
        A[row * 9 + i * 3 + k] += J(j, k);
      }
      rhs[row] = i == j ? -2.0 : 0.0;
    }
  }
  std::vector<double> p;
  try {
    p = solve_dense(std::move(A), std::move(rhs));
  } catch (std::domain_error const&) {
    throw std::runtime_error("solve_lyapunov: singular Kronecker system");
  }
  Mat3 P;
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 3; ++c) {
      P(r, c) = p[r * 3 + c];
    }
  }
  return symmetrized(P);
}

/// True when all leading principal minors are positive.
inline bool is_positive_definite(Mat3 const& a) {
  double const m1 = a(0, 0);
  double const m2 = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
  return m1 > 0.0 && m2 > 0.0 && a.det() > 0.0;
}

/// Residual Q J + J^T Q + 2 Q^2 (zero for the exact quasipotential matrix).
inline Mat3 quasipotential_residual(Mat3 const& Q, Mat3 const& J) {
  return Q * J + J.transposed() * Q + 2.0 * (Q * Q);
}

inline QuasipotentialMatrix quasipotential_matrix(Mat3 const& J) {
  Mat3 const P = solve_lyapunov(J);
  QuasipotentialMatrix out{symmetrized(inverse(P)), J};
  if (!is_positive_definite(out.Q)) {
    throw std::runtime_error(
        "quasipotential_matrix: Q is not positive definite");
  }
  return out;
}

struct QuadraticValue {
  double value = 0.0;
  Vec3 gradient;
};

/// U*(x) = (x - x*)^T Q (x - x*) and its gradient 2 Q (x - x*).
inline QuadraticValue u_star(Vec3 const& x, Vec3 const& center,
                             Mat3 const& Q) {
  Vec3 const d = x - center;
  Vec3 const Qd = Q * d;
  return {dot(d, Qd), 2.0 * Qd};
}

struct EquilibriumInit {
  std::size_t center = 0;
  QuasipotentialMatrix qmat;
  /// Linear index and initial value of every in-grid nearest neighbor.
  std::vector<std::pair<std::size_t, double>> neighbors;
};

/// Mesh node coinciding with x* to within 1e-9 min(h).
inline Index3 aligned_node(Grid3 const& grid, Vec3 const& x_star) {
  Vec3 const s = grid.to_index_space(x_star);
  Index3 const t{static_cast<int>(std::lround(s.x)),
                 static_cast<int>(std::lround(s.y)),
                 static_cast<int>(std::lround(s.z))};
  if (!grid.contains(t)) {
    throw AlignmentError("equilibrium lies outside the mesh");
  }
  Vec3 const snapped = grid.coords(t);
  double const tol = 1e-9 * grid.min_step();
  if (std::abs(snapped.x - x_star.x) > tol ||
      std::abs(snapped.y - x_star.y) > tol ||
      std::abs(snapped.z - x_star.z) > tol) {
    throw AlignmentError("equilibrium is not a mesh node");
  }
  return t;
}

/// Quadratic initialization of the 26 nodes around x*.
inline EquilibriumInit initialize_equilibrium(Grid3 const& grid,
                                              VectorField const& field,
                                              Vec3 const& x_star,
                                              JacobianPolicy policy) {
  Index3 const c = aligned_node(grid, x_star);
  EquilibriumInit out;
  out.center = grid.linear(c);
  out.qmat = quasipotential_matrix(jacobian_at(field, x_star, policy));
  Vec3 const xc = grid.coords(c);
  for (Index3 const& t : neighborhood(grid, c, NeighborKind::All)) {
    out.neighbors.emplace_back(grid.linear(t),
                               u_star(grid.coords(t), xc, out.qmat.Q).value);
  }
  return out;
}

inline EquilibriumInit initialize_equilibrium(Grid3 const& grid,
                                              VectorField const& field,
                                              Vec3 const& x_star) {
  JacobianPolicy p = field.default_policy;
  if (p == JacobianPolicy::Exact && !field.jacobian) {
    p = JacobianPolicy::FiniteDifference;
  }
  return initialize_equilibrium(grid, field, x_star, p);
}

}  // namespace qpot3d

#endif  // QPOT3D_LYAPUNOV_HPP_
