#ifndef QPOT3D_LINALG_HPP_
#define QPOT3D_LINALG_HPP_

// Fixed-size dense linear algebra for 2- and 3-dimensional problems.
// Everything here is small enough that hand-written loops beat a general
// library, and the inner loops of the solver call into it billions of times.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

namespace qpot3d {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr double operator[](std::size_t i) const {
    return i == 0 ? x : (i == 1 ? y : z);
  }
  constexpr double& operator[](std::size_t i) {
    return i == 0 ? x : (i == 1 ? y : z);
  }

  constexpr Vec3& operator+=(Vec3 const& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  constexpr Vec3& operator-=(Vec3 const& o) {
    x -= o.x;
    y -= o.y;
    z -= o.z;
    return *this;
  }
  constexpr Vec3& operator*=(double s) {
    x *= s;
    y *= s;
    z *= s;
    return *this;
  }

  friend constexpr bool operator==(Vec3 const&, Vec3 const&) = default;
};

constexpr Vec3 operator+(Vec3 a, Vec3 const& b) { return a += b; }
constexpr Vec3 operator-(Vec3 a, Vec3 const& b) { return a -= b; }
constexpr Vec3 operator-(Vec3 const& a) { return {-a.x, -a.y, -a.z}; }
constexpr Vec3 operator*(double s, Vec3 a) { return a *= s; }
constexpr Vec3 operator*(Vec3 a, double s) { return a *= s; }

constexpr double dot(Vec3 const& a, Vec3 const& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}
inline double norm(Vec3 const& a) { return std::sqrt(dot(a, a)); }
constexpr Vec3 cross(Vec3 const& a, Vec3 const& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline bool is_finite(Vec3 const& a) {
  return std::isfinite(a.x) && std::isfinite(a.y) && std::isfinite(a.z);
}

struct Vec2 {
  double a = 0.0;
  double b = 0.0;

  constexpr double operator[](std::size_t i) const { return i == 0 ? a : b; }
  constexpr double& operator[](std::size_t i) { return i == 0 ? a : b; }
  friend constexpr bool operator==(Vec2 const&, Vec2 const&) = default;
};

constexpr Vec2 operator+(Vec2 const& u, Vec2 const& v) {
  return {u.a + v.a, u.b + v.b};
}
constexpr Vec2 operator-(Vec2 const& u, Vec2 const& v) {
  return {u.a - v.a, u.b - v.b};
}
constexpr Vec2 operator*(double s, Vec2 const& v) { return {s * v.a, s * v.b}; }
inline double norm(Vec2 const& v) { return std::hypot(v.a, v.b); }

/// Symmetric-or-not 2x2 matrix, row major.
struct Mat2 {
  double a11 = 0.0, a12 = 0.0;
  double a21 = 0.0, a22 = 0.0;

  constexpr double det() const { return a11 * a22 - a12 * a21; }
  constexpr double trace() const { return a11 + a22; }
};

constexpr Mat2 operator+(Mat2 const& p, Mat2 const& q) {
  return {p.a11 + q.a11, p.a12 + q.a12, p.a21 + q.a21, p.a22 + q.a22};
}
constexpr Mat2 operator*(double s, Mat2 const& p) {
  return {s * p.a11, s * p.a12, s * p.a21, s * p.a22};
}
constexpr Vec2 operator*(Mat2 const& m, Vec2 const& v) {
  return {m.a11 * v.a + m.a12 * v.b, m.a21 * v.a + m.a22 * v.b};
}

/// Outer product u v^T.
constexpr Mat2 outer(Vec2 const& u, Vec2 const& v) {
  return {u.a * v.a, u.a * v.b, u.b * v.a, u.b * v.b};
}

/// Solves m s = r by Cramer's rule. Returns false when m is singular.
inline bool solve2(Mat2 const& m, Vec2 const& r, Vec2& s) {
  double const d = m.det();
  if (d == 0.0 || !std::isfinite(d)) {
    return false;
  }
  s.a = (r.a * m.a22 - m.a12 * r.b) / d;
  s.b = (m.a11 * r.b - r.a * m.a21) / d;
  return true;
}

/// A 3x2 matrix stored as two columns.
struct Mat32 {
  Vec3 c1;
  Vec3 c2;

  /// M^T v
  constexpr Vec2 tmul(Vec3 const& v) const { return {dot(c1, v), dot(c2, v)}; }
  /// M l
  constexpr Vec3 mul(Vec2 const& l) const { return l.a * c1 + l.b * c2; }
};

/// P^T Q for two 3x2 matrices.
constexpr Mat2 tmul(Mat32 const& p, Mat32 const& q) {
  return {dot(p.c1, q.c1), dot(p.c1, q.c2), dot(p.c2, q.c1), dot(p.c2, q.c2)};
}

/// 3x3 matrix, row major.
struct Mat3 {
  std::array<std::array<double, 3>, 3> m{};

  static constexpr Mat3 identity() {
    Mat3 r;
    r.m[0][0] = r.m[1][1] = r.m[2][2] = 1.0;
    return r;
  }
  static constexpr Mat3 diag(double a, double b, double c) {
    Mat3 r;
    r.m[0][0] = a;
    r.m[1][1] = b;
    r.m[2][2] = c;
    return r;
  }
  static constexpr Mat3 rows(Vec3 const& r0, Vec3 const& r1, Vec3 const& r2) {
    Mat3 r;
    for (std::size_t j = 0; j < 3; ++j) {
      r.m[0][j] = r0[j];
      r.m[1][j] = r1[j];
      r.m[2][j] = r2[j];
    }
    return r;
  }

  constexpr double operator()(std::size_t i, std::size_t j) const {
    return m[i][j];
  }
  constexpr double& operator()(std::size_t i, std::size_t j) { return m[i][j]; }

  constexpr Vec3 row(std::size_t i) const { return {m[i][0], m[i][1], m[i][2]}; }
  constexpr Vec3 col(std::size_t j) const { return {m[0][j], m[1][j], m[2][j]}; }

  constexpr Mat3 transposed() const {
    Mat3 r;
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 3; ++j) {
        r.m[i][j] = m[j][i];
      }
    }
    return r;
  }

  constexpr double trace() const { return m[0][0] + m[1][1] + m[2][2]; }

  constexpr double det() const {
    return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
           m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
           m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  }

  friend constexpr bool operator==(Mat3 const&, Mat3 const&) = default;
};

constexpr Mat3 operator+(Mat3 const& a, Mat3 const& b) {
  Mat3 r;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      r.m[i][j] = a.m[i][j] + b.m[i][j];
    }
  }
  return r;
}
constexpr Mat3 operator-(Mat3 const& a, Mat3 const& b) {
  Mat3 r;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      r.m[i][j] = a.m[i][j] - b.m[i][j];
    }
  }
  return r;
}
constexpr Mat3 operator*(double s, Mat3 const& a) {
  Mat3 r;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      r.m[i][j] = s * a.m[i][j];
    }
  }
  return r;
}
constexpr Mat3 operator*(Mat3 const& a, Mat3 const& b) {
  Mat3 r;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 3; ++k) {
        s += a.m[i][k] * b.m[k][j];
      }
      r.m[i][j] = s;
    }
  }
  return r;
}
constexpr Vec3 operator*(Mat3 const& a, Vec3 const& v) {
  return {dot(a.row(0), v), dot(a.row(1), v), dot(a.row(2), v)};
}

inline double frobenius_norm(Mat3 const& a) {
  double s = 0.0;
  for (auto const& r : a.m) {
    for (double v : r) {
      s += v * v;
    }
  }
  return std::sqrt(s);
}

/// Inverse by the adjugate. Throws std::domain_error when singular.
inline Mat3 inverse(Mat3 const& a) {
  double const d = a.det();
  if (d == 0.0 || !std::isfinite(d)) {
    throw std::domain_error("inverse: singular 3x3 matrix");
  }
  Mat3 r;
  r.m[0][0] = a.m[1][1] * a.m[2][2] - a.m[1][2] * a.m[2][1];
  r.m[0][1] = a.m[0][2] * a.m[2][1] - a.m[0][1] * a.m[2][2];
  r.m[0][2] = a.m[0][1] * a.m[1][2] - a.m[0][2] * a.m[1][1];
  r.m[1][0] = a.m[1][2] * a.m[2][0] - a.m[1][0] * a.m[2][2];
  r.m[1][1] = a.m[0][0] * a.m[2][2] - a.m[0][2] * a.m[2][0];
  r.m[1][2] = a.m[0][2] * a.m[1][0] - a.m[0][0] * a.m[1][2];
  r.m[2][0] = a.m[1][0] * a.m[2][1] - a.m[1][1] * a.m[2][0];
  r.m[2][1] = a.m[0][1] * a.m[2][0] - a.m[0][0] * a.m[2][1];
  r.m[2][2] = a.m[0][0] * a.m[1][1] - a.m[0][1] * a.m[1][0];
  return (1.0 / d) * r;
}

/// Rotation by angle about a coordinate axis (0, 1 or 2), right handed.
inline Mat3 axis_rotation(int axis, double angle) {
  double const c = std::cos(angle);
  double const s = std::sin(angle);
  switch (axis) {
    case 0:
      return Mat3::rows({1, 0, 0}, {0, c, -s}, {0, s, c});
    case 1:
      return Mat3::rows({c, 0, s}, {0, 1, 0}, {-s, 0, c});
    case 2:
      return Mat3::rows({c, -s, 0}, {s, c, 0}, {0, 0, 1});
    default:
      throw std::invalid_argument("axis_rotation: axis must be 0, 1 or 2");
  }
}

/// Solves the dense system a x = rhs (a is n x n, row major) by Gaussian
/// elimination with partial pivoting. Throws std::domain_error on a
/// numerically singular pivot.
inline std::vector<double> solve_dense(std::vector<double> a,
                                       std::vector<double> rhs) {
  std::size_t const n = rhs.size();
  if (a.size() != n * n) {
    throw std::invalid_argument("solve_dense: dimension mismatch");
  }
  double scale = 0.0;
  for (double v : a) {
    scale = std::max(scale, std::abs(v));
  }
  double const tiny = scale * 1e-14 * static_cast<double>(n);
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(a[r * n + c]) > std::abs(a[piv * n + c])) {
        piv = r;
      }
    }
    if (!(std::abs(a[piv * n + c]) > tiny)) {
      throw std::domain_error("solve_dense: singular system");
    }
    if (piv != c) {
      for (std::size_t k = 0; k < n; ++k) {
        std::swap(a[c * n + k], a[piv * n + k]);
      }
      std::swap(rhs[c], rhs[piv]);
    }
    for (std::size_t r = c + 1; r < n; ++r) {
      double const f = a[r * n + c] / a[c * n + c];
      if (f == 0.0) {
        continue;
      }
      for (std::size_t k = c; k < n; ++k) {
        a[r * n + k] -= f * a[c * n + k];
      }
      rhs[r] -= f * rhs[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t ri = n; ri-- > 0;) {
    double s = rhs[ri];
    for (std::size_t k = ri + 1; k < n; ++k) {
      s -= a[ri * n + k] * x[k];
    }
    x[ri] = s / a[ri * n + ri];
  }
  return x;
}

}  // namespace qpot3d

#endif  // QPOT3D_LINALG_HPP_
