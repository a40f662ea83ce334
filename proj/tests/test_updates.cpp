#include <gtest/gtest.h>

#include <bit>
#include <cstdint>
#include <random>

#include "qpot3d/updates.hpp"
#include "test_support.hpp"

using namespace qpot3d;
using oracle::linear_drift;

namespace {

VectorField minus_identity() { return linear_drift((-1.0) * Mat3::identity()); }

VectorField constant_drift(Vec3 b) {
  VectorField f;
  f.name = "constant";
  f.eval = [b](Vec3 const&) { return b; };
  return f;
}

Vec3 random_vec(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng), u(rng)};
}

}  // namespace

TEST(OnePoint, WorkedExampleValue) {
  double const h = 0.01;
  UpdateProposal const p =
      one_point_update(h * Vec3{1, 0, 0}, h * h, h * Vec3{2, -1, 0}, minus_identity());
  EXPECT_NEAR(p.value / (h * h), 1.0 + 2.0 + std::sqrt(5.0), 1e-12);
  EXPECT_NEAR(p.value / (h * h), 5.236, 5e-4);
  EXPECT_TRUE(p.interior);
}

TEST(OnePoint, AlongTheFlowCostsNothing) {
  // Moving against b = -x (uphill away from the origin) costs 2 |x| |dx|;
  // moving with the flow costs nothing.
  UpdateProposal const down =
      one_point_update({2, 0, 0}, 1.0, {1, 0, 0}, minus_identity());
  EXPECT_NEAR(down.value, 1.0, 1e-15);
  UpdateProposal const up = one_point_update({1, 0, 0}, 1.0, {2, 0, 0}, minus_identity());
  EXPECT_NEAR(up.value, 1.0 + 2.0 * 1.5, 1e-15);
}

TEST(OnePoint, CoincidentPointsThrow) {
  EXPECT_THROW(one_point_update({1, 0, 0}, 0.0, {1, 0, 0}, minus_identity()),
               std::invalid_argument);
}

TEST(Triangle, WorkedExampleMidpointAndRejection) {
  double const h = 0.01;
  Vec3 const x0 = h * Vec3{1, 0, 0}, x1 = h * Vec3{1, -1, 0}, x = h * Vec3{2, -1, 0};
  VectorField const f = minus_identity();
  double const mid = oracle::triangle_objective(x0, x1, h * h, 2 * h * h, x, f, 0.5);
  EXPECT_NEAR(mid / (h * h), 5.250, 5e-4);

  UpdateProposal const p = triangle_update(x0, x1, h * h, 2 * h * h, x, f);
  EXPECT_FALSE(p.interior);
  EXPECT_EQ(p.outcome, UpdateOutcome::SignTest);

  // The constrained minimum is at lambda = 0 and equals the one-point value.
  auto const [arg, best] = oracle::scan_1d(
      [&](double l) { return oracle::triangle_objective(x0, x1, h * h, 2 * h * h, x, f, l); },
      100000);
  EXPECT_EQ(arg, 0.0);
  EXPECT_NEAR(best, one_point_update(x0, h * h, x, f).value, 1e-15);
}

TEST(Triangle, LibraryObjectiveMatchesDefinition) {
  double const h = 0.01;
  Vec3 const x0 = h * Vec3{1, 0, 0}, x1 = h * Vec3{1, -1, 0}, x = h * Vec3{2, -1, 0};
  VectorField const f = minus_identity();
  TriangleProblem const t = make_triangle(x0, x1, h * h, 2 * h * h, x, f.eval(0.5 * (x0 + x)),
                                          f.eval(0.5 * (x1 + x)));
  for (double l = 0.0; l <= 1.0; l += 0.125) {
    EXPECT_NEAR(triangle_value(t, l),
                oracle::triangle_objective(x0, x1, h * h, 2 * h * h, x, f, l), 1e-18);
  }
}

TEST(Triangle, SymmetricConfigurationHasMidpointMinimizer) {
  double const h = 0.1;
  UpdateProposal const p = triangle_update(h * Vec3{-1, 1, 0}, h * Vec3{1, 1, 0}, 0.3, 0.3,
                                           {0, 0, 0}, constant_drift({0, 1, 0}));
  ASSERT_TRUE(p.interior);
  EXPECT_NEAR(p.lambda.a, 0.5, 1e-12);
}

TEST(Triangle, DerivativesMatchFiniteDifferences) {
  std::mt19937_64 rng(21);
  for (int n = 0; n < 1000; ++n) {
    std::uniform_real_distribution<double> ul(0.05, 0.95);
    Vec3 const x = random_vec(rng, 1.0);
    Vec3 const x0 = x + random_vec(rng, 0.1);
    Vec3 const x1 = x + random_vec(rng, 0.1);
    Vec3 const b0 = random_vec(rng, 1.0), b1 = random_vec(rng, 1.0);
    TriangleProblem const t = make_triangle(x0, x1, 0.2, 0.25, x, b0, b1);
    double const l = ul(rng);
    double const e = 1e-6;
    double const fd = (triangle_value(t, l + e) - triangle_value(t, l - e)) / (2 * e);
    double const g = triangle_derivative(t, l);
    EXPECT_NEAR(g, fd, 1e-6 * (1.0 + std::abs(g)));
    double const fd2 =
        (triangle_derivative(t, l + e) - triangle_derivative(t, l - e)) / (2 * e);
    double const h2 = triangle_second_derivative(t, l);
    EXPECT_NEAR(h2, fd2, 1e-5 * (1.0 + std::abs(h2)));
  }
}

TEST(Triangle, MatchesDenseScanForRandomLinearFields) {
  std::mt19937_64 rng(22);
  int interior = 0;
  for (int n = 0; n < 300; ++n) {
    Mat3 const J = oracle::random_stable_matrix(rng);
    VectorField const f = linear_drift(J);
    double const h = 0.05;
    Vec3 const x = random_vec(rng, 1.0);
    Vec3 const x0 = x + h * random_vec(rng, 1.0);
    Vec3 const x1 = x + h * random_vec(rng, 1.0);
    std::uniform_real_distribution<double> uu(0.0, 0.05);
    double const U0 = uu(rng), U1 = uu(rng);
    UpdateProposal const p = triangle_update(x0, x1, U0, U1, x, f);
    if (!p.interior) {
      continue;
    }
    ++interior;
    auto const [arg, best] = oracle::scan_1d(
        [&](double l) { return oracle::triangle_objective(x0, x1, U0, U1, x, f, l); },
        100000);
    EXPECT_LT(std::abs(p.value - best), 1e-9);
    EXPECT_LE(p.value, best + 1e-12);
    EXPECT_LE(p.value, std::min(one_point_update(x0, U0, x, f).value,
                                one_point_update(x1, U1, x, f).value) +
                           1e-12);
  }
  EXPECT_GT(interior, 30);
}

TEST(Triangle, DegenerateInputsThrow) {
  VectorField const f = minus_identity();
  EXPECT_THROW(triangle_update({1, 0, 0}, {1, 0, 0}, 0, 0, {2, 0, 0}, f),
               std::invalid_argument);
  EXPECT_THROW(triangle_update({1, 0, 0}, {0, 1, 0}, 0, 0, {1, 0, 0}, f),
               std::invalid_argument);
}

TEST(Triangle, NonFiniteFieldIsRejected) {
  VectorField const f = constant_drift({std::nan(""), 0, 0});
  UpdateProposal const p = triangle_update({1, 0, 0}, {0, 1, 0}, 0, 0, {1, 1, 1}, f);
  EXPECT_FALSE(p.interior);
  EXPECT_FALSE(std::isfinite(p.value) && p.value < 0.0);
}

TEST(Simplex, GradientAndHessianMatchFiniteDifferences) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> ul(0.05, 0.45);
  for (int n = 0; n < 1000; ++n) {
    Vec3 const x = random_vec(rng, 1.0);
    Vec3 const x0 = x + random_vec(rng, 0.1), x1 = x + random_vec(rng, 0.1),
               x2 = x + random_vec(rng, 0.1);
    Vec3 const b0 = random_vec(rng, 1.0), b1 = random_vec(rng, 1.0), b2 = random_vec(rng, 1.0);
    SimplexProblem const s = make_simplex(x0, x1, x2, 0.2, 0.25, 0.22, x, b0, b1, b2);
    Vec2 const l{ul(rng), ul(rng)};
    double const e = 1e-6;
    Vec2 const g = simplex_gradient(s, l);
    Vec2 const fd = oracle::fd_gradient([&](Vec2 const& m) { return simplex_value(s, m); }, l, e);
    EXPECT_LT(norm(g - fd), 1e-6 * (1.0 + norm(g)));

    Mat2 const H = simplex_hessian(s, l);
    Vec2 const c1 = (1.0 / (2 * e)) *
                    (simplex_gradient(s, {l.a + e, l.b}) - simplex_gradient(s, {l.a - e, l.b}));
    Vec2 const c2 = (1.0 / (2 * e)) *
                    (simplex_gradient(s, {l.a, l.b + e}) - simplex_gradient(s, {l.a, l.b - e}));
    double const scale = 1.0 + std::abs(H.a11) + std::abs(H.a12) + std::abs(H.a22);
    EXPECT_NEAR(H.a11, c1.a, 1e-5 * scale);
    EXPECT_NEAR(H.a21, c1.b, 1e-5 * scale);
    EXPECT_NEAR(H.a12, c2.a, 1e-5 * scale);
    EXPECT_NEAR(H.a22, c2.b, 1e-5 * scale);
  }
}

TEST(Simplex, FrozenFieldHessianIsPositiveDefinite) {
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> ul(0.05, 0.45);
  for (int n = 0; n < 1000; ++n) {
    Vec3 const x = random_vec(rng, 1.0);
    Vec3 const b = random_vec(rng, 1.0);
    Vec3 const x0 = x + random_vec(rng, 0.1), x1 = x + random_vec(rng, 0.1),
               x2 = x + random_vec(rng, 0.1);
    SimplexProblem const s = make_simplex(x0, x1, x2, 0.0, 0.0, 0.0, x, b, b, b);
    Vec2 const l{ul(rng), ul(rng)};
    Vec3 const d = s.d(l);
    // Skip configurations where b is (nearly) parallel to x - x_lambda.
    if (norm(b) * norm(d) - std::abs(dot(b, d)) < 1e-6 * norm(b) * norm(d)) {
      continue;
    }
    Mat2 const H = simplex_hessian(s, l);
    EXPECT_GT(H.trace(), 0.0);
    EXPECT_GT(H.det(), -1e-14 * H.trace() * H.trace());
  }
}

TEST(Simplex, SingularConfigurationsThrow) {
  Vec3 const x{0, 0, 0};
  SimplexProblem const s = make_simplex({1, 0, 0}, {0, 1, 0}, {0, 0, 1}, 0, 0, 0, x,
                                        {0, 0, 0}, {0, 0, 0}, {0, 0, 0});
  EXPECT_THROW(simplex_gradient(s, {0.2, 0.2}), SingularUpdate);
  EXPECT_THROW(simplex_hessian(s, {0.2, 0.2}), SingularUpdate);
}

namespace {

struct SimplexCase {
  Vec3 x0, x1, x2, x;
  double U0, U1, U2;
};

/// Constant drift b = e3 with x at the origin: the action vanishes where the
/// base plane meets the vertical axis through x.
SimplexCase inside_case() {
  double const h = 0.1;
  return {h * Vec3{-1, -1, -1}, h * Vec3{2, 0, -1}, h * Vec3{0, 2, -1}, {0, 0, 0}, 0, 0, 0};
}

}  // namespace

TEST(Simplex, SymmetricConfigurationConvergesOnTheMirrorLine) {
  SimplexCase const c = inside_case();
  VectorField const f = constant_drift({0, 0, 1});
  UpdateProposal const warm = triangle_update(c.x0, c.x1, c.U0, c.U1, c.x, f);
  ASSERT_TRUE(warm.interior);
  EXPECT_NEAR(warm.lambda.a, 0.4, 1e-10);
  UpdateProposal const p =
      simplex_update(c.x0, c.x1, c.x2, c.U0, c.U1, c.U2, c.x, f, warm);
  ASSERT_TRUE(p.interior);
  EXPECT_NEAR(p.lambda.a, p.lambda.b, 1e-10);
  EXPECT_NEAR(p.lambda.a, 0.25, 1e-10);
  EXPECT_NEAR(p.value, 0.0, 1e-12);
  EXPECT_LT(p.value, warm.value);
}

TEST(Simplex, KktSkipKeepsTheWarmStartValue) {
  double const h = 0.1;
  // Third vertex on the far side of the x0-x1 edge from the zero-action point.
  Vec3 const x0 = h * Vec3{-1, -1, -1}, x1 = h * Vec3{2, 0, -1}, x2 = h * Vec3{-1, -3, -1};
  VectorField const f = constant_drift({0, 0, 1});
  UpdateProposal const warm = triangle_update(x0, x1, 0, 0, {0, 0, 0}, f);
  ASSERT_TRUE(warm.interior);
  UpdateProposal const p = simplex_update(x0, x1, x2, 0, 0, 0, {0, 0, 0}, f, warm);
  EXPECT_FALSE(p.interior);
  EXPECT_EQ(p.outcome, UpdateOutcome::KktSkip);
  EXPECT_EQ(p.value, warm.value);

  // The constrained minimum over the whole base is indeed on that edge.
  auto const [arg, best] = oracle::scan_simplex(
      [&](double l1, double l2) {
        return oracle::simplex_objective(x0, x1, x2, 0, 0, 0, {0, 0, 0}, f, l1, l2);
      },
      200, 6);
  EXPECT_NEAR(best, warm.value, 1e-8);
  EXPECT_LT(arg.b, 1e-3);
}

TEST(Simplex, WarmStartMustBeInterior) {
  SimplexCase const c = inside_case();
  VectorField const f = constant_drift({0, 0, 1});
  UpdateProposal warm;
  EXPECT_THROW(simplex_update(c.x0, c.x1, c.x2, 0, 0, 0, c.x, f, warm), std::invalid_argument);
  warm.interior = true;
  warm.lambda = {0.4, 0};
  EXPECT_THROW(simplex_update(c.x0, c.x0, c.x2, 0, 0, 0, c.x, f, warm), std::invalid_argument);
}

TEST(Simplex, Example1MatchesDenseBarycentricScan) {
  VectorField const f = builtin_field("example1");
  auto const U = [&](Vec3 const& p) { return f.exact->value(p); };
  double const h = 0.05;
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  auto const& offs = neighbor_offsets();
  auto const at = [&](Vec3 const& x, int s) {
    Index3 const d = offs[static_cast<std::size_t>(s)].d;
    return x + h * Vec3{static_cast<double>(d.i), static_cast<double>(d.j),
                        static_cast<double>(d.k)};
  };
  int converged = 0;
  for (int n = 0; n < 50 && converged < 40; ++n) {
    Vec3 const x{u(rng), u(rng), u(rng)};
    for (int s0 = 0; s0 < 18; ++s0) {
      for (int s1 = 0; s1 < 18; ++s1) {
        for (int s2 = s1 + 1; s2 < 18; ++s2) {
          if (s0 == s1 || s0 == s2 ||
              !is_admissible_base(offs[static_cast<std::size_t>(s0)].d,
                                  offs[static_cast<std::size_t>(s1)].d,
                                  offs[static_cast<std::size_t>(s2)].d)) {
            continue;
          }
          Vec3 const x0 = at(x, s0), x1 = at(x, s1), x2 = at(x, s2);
          UpdateProposal const warm = triangle_update(x0, x1, U(x0), U(x1), x, f);
          if (!warm.interior) {
            continue;
          }
          UpdateProposal const p =
              simplex_update(x0, x1, x2, U(x0), U(x1), U(x2), x, f, warm);
          if (!p.interior) {
            continue;
          }
          ++converged;
          auto const [arg, best] = oracle::scan_simplex(
              [&](double l1, double l2) {
                return oracle::simplex_objective(x0, x1, x2, U(x0), U(x1), U(x2), x, f, l1,
                                                  l2);
              },
              400, 8);
          EXPECT_LE(p.value, warm.value);
          EXPECT_LT(std::abs(p.value - best), 1e-8);
        }
      }
    }
  }
  EXPECT_GE(converged, 10);
}

TEST(Factoring, DisabledOrOutOfRangeIsBitwiseIdentical) {
  std::mt19937_64 rng(51);
  FactoringContext off;
  off.enabled = false;
  off.center = {0, 0, 0};
  off.Q = Mat3::diag(3, 4, 1);
  off.radius = 10.0;
  FactoringContext far = off;
  far.enabled = true;
  far.radius = 1e-3;
  VectorField const f = builtin_field("example1");
  for (int n = 0; n < 200; ++n) {
    Vec3 const x = random_vec(rng, 1.0);
    if (norm(x) < 0.01) continue;
    Vec3 const x0 = x + random_vec(rng, 0.1), x1 = x + random_vec(rng, 0.1);
    UpdateProposal const a = triangle_update(x0, x1, 0.3, 0.31, x, f);
    UpdateProposal const b = triangle_update(x0, x1, 0.3, 0.31, x, f, &off);
    UpdateProposal const c = triangle_update(x0, x1, 0.3, 0.31, x, f, &far);
    EXPECT_EQ(a.interior, b.interior);
    EXPECT_EQ(std::bit_cast<std::uint64_t>(a.value), std::bit_cast<std::uint64_t>(b.value));
    EXPECT_EQ(std::bit_cast<std::uint64_t>(a.value), std::bit_cast<std::uint64_t>(c.value));
  }
}

TEST(Factoring, InterpolantIsExactForTheQuadraticPotential) {
  std::mt19937_64 rng(52);
  FactoringContext fac;
  fac.enabled = true;
  fac.center = {0.1, -0.2, 0.05};
  fac.Q = Mat3::diag(3, 4, 1);
  fac.radius = 100.0;
  auto const ustar = [&](Vec3 const& p) { return u_star(p, fac.center, fac.Q).value; };
  std::uniform_real_distribution<double> ul(0.0, 0.5);
  for (int n = 0; n < 200; ++n) {
    Vec3 const x = random_vec(rng, 1.0);
    Vec3 const x0 = x + random_vec(rng, 0.1), x1 = x + random_vec(rng, 0.1),
               x2 = x + random_vec(rng, 0.1);
    // Vertex values equal to U* plus an affine perturbation.
    double const U0 = ustar(x0) + 0.01, U1 = ustar(x1) + 0.02, U2 = ustar(x2) - 0.01;
    Vec2 const l{ul(rng), ul(rng)};
    Vec3 const xl = x0 + l.a * (x1 - x0) + l.b * (x2 - x0);
    double const expected = ustar(xl) + (1 - l.a - l.b) * 0.01 + l.a * 0.02 - l.b * 0.01;
    EXPECT_NEAR(factored_term(x0, x1, x2, U0, U1, U2, l, fac), expected, 1e-12);
    SimplexProblem const s =
        make_simplex(x0, x1, x2, U0, U1, U2, x, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, &fac);
    EXPECT_NEAR(simplex_interpolant(s, l), expected, 1e-12);
    TriangleProblem const t = make_triangle(x0, x1, U0, U1, x, {1, 0, 0}, {0, 1, 0}, &fac);
    Vec3 const xt = x0 + l.a * (x1 - x0);
    EXPECT_NEAR(triangle_interpolant(t, l.a),
                ustar(xt) + (1 - l.a) * 0.01 + l.a * 0.02, 1e-12);
  }
}

TEST(Factoring, FactoredDerivativesMatchFiniteDifferences) {
  std::mt19937_64 rng(53);
  FactoringContext fac;
  fac.enabled = true;
  fac.center = {0, 0, 0};
  fac.Q = Mat3::diag(3, 4, 1);
  fac.radius = 100.0;
  std::uniform_real_distribution<double> ul(0.05, 0.45);
  for (int n = 0; n < 200; ++n) {
    Vec3 const x = random_vec(rng, 1.0);
    Vec3 const x0 = x + random_vec(rng, 0.1), x1 = x + random_vec(rng, 0.1),
               x2 = x + random_vec(rng, 0.1);
    SimplexProblem const s = make_simplex(x0, x1, x2, 0.2, 0.25, 0.22, x, random_vec(rng, 1),
                                          random_vec(rng, 1), random_vec(rng, 1), &fac);
    Vec2 const l{ul(rng), ul(rng)};
    Vec2 const g = simplex_gradient(s, l);
    Vec2 const fd =
        oracle::fd_gradient([&](Vec2 const& m) { return simplex_value(s, m); }, l, 1e-6);
    EXPECT_LT(norm(g - fd), 1e-6 * (1.0 + norm(g)));
  }
}
