#include <gtest/gtest.h>

#include <bit>
#include <cstring>

#include "qpot3d/errors.hpp"
#include "qpot3d/postprocess.hpp"
#include "qpot3d/solver.hpp"
#include "test_support.hpp"

using namespace qpot3d;

namespace {

QuasipotentialField solve_example(std::string const& id, int N, int K,
                                  Termination term = Termination::BoundaryHit,
                                  PopObserver obs = {}) {
  FieldCatalogEntry const* e = find_catalog_entry(id);
  Grid3 const g = Grid3::from_box(e->domain_lo, e->domain_hi, N, N, N);
  SolverConfig cfg;
  cfg.K = K;
  cfg.termination = term;
  return solve(g, builtin_field(id), e->equilibrium, cfg, std::move(obs));
}

}  // namespace

TEST(Solver, EquilibriumIsZeroAndValuesNonNegative) {
  QuasipotentialField const f = solve_example("example1", 17, 3);
  EXPECT_EQ(f.U[f.equilibrium_node], 0.0);
  std::size_t reached = 0;
  for (std::size_t n = 0; n < f.grid.size(); ++n) {
    if (f.reached(n)) {
      ++reached;
      EXPECT_GE(f.U[n], 0.0);
      EXPECT_TRUE(f.labels[n] == Label::AcceptedFront || f.labels[n] == Label::Accepted);
    } else {
      EXPECT_TRUE(f.labels[n] == Label::Considered || f.labels[n] == Label::Unknown);
    }
  }
  EXPECT_EQ(reached, f.stats.accepted_nodes);
  EXPECT_TRUE(f.stats.boundary_reached);
}

TEST(Solver, ExhaustReachesTheWholeMesh) {
  QuasipotentialField const f = solve_example("example1", 13, 3, Termination::Exhaust);
  for (std::size_t n = 0; n < f.grid.size(); ++n) {
    EXPECT_TRUE(f.reached(n));
  }
}

TEST(Solver, BoundaryHitStopsAtTheFirstBoundaryNode) {
  QuasipotentialField const f = solve_example("example1", 17, 3);
  std::size_t on_boundary = 0;
  for (std::size_t n = 0; n < f.grid.size(); ++n) {
    if (f.reached(n) && f.grid.on_boundary(f.grid.triple(n))) ++on_boundary;
  }
  EXPECT_EQ(on_boundary, 1u);
}

TEST(Solver, GradientFieldIsSymmetricUnderSignFlips) {
  // b = -x has U = |x|^2; the computed field must respect the reflections.
  // Pop order among equal keys and incumbent one-point ties are
  // index-dependent, so mirror images agree to a small fraction of h^2
  // rather than bitwise.
  VectorField const f = oracle::linear_drift((-1.0) * Mat3::identity());
  Grid3 const g = Grid3::from_box({-1, -1, -1}, {1, 1, 1}, 17, 17, 17);
  SolverConfig cfg;
  cfg.K = 3;
  cfg.termination = Termination::Exhaust;
  QuasipotentialField const U = solve(g, f, {0, 0, 0}, cfg);
  int const m = 16;
  double const h = g.steps().x;
  double const tol = 1e-3 * h * h;
  for (std::size_t n = 0; n < g.size(); ++n) {
    Index3 const t = g.triple(n);
    double const u = U.U[n];
    ASSERT_TRUE(std::isfinite(u));
    EXPECT_NEAR(u, U.at({m - t.i, t.j, t.k}), tol);
    EXPECT_NEAR(u, U.at({t.i, m - t.j, t.k}), tol);
    EXPECT_NEAR(u, U.at({t.i, t.j, m - t.k}), tol);
    EXPECT_NEAR(u, U.at({t.j, t.i, t.k}), tol);
    EXPECT_NEAR(u, U.at({t.k, t.j, t.i}), tol);
    Vec3 const x = g.coords(n);
    EXPECT_NEAR(u, dot(x, x), 0.05 * dot(x, x) + 1e-12);
  }
}

TEST(Solver, RepeatedSolvesAreBitwiseIdentical) {
  QuasipotentialField const a = solve_example("example4", 17, 3);
  QuasipotentialField const b = solve_example("example4", 17, 3);
  ASSERT_EQ(a.U.size(), b.U.size());
  EXPECT_EQ(std::memcmp(a.U.data(), b.U.data(), a.U.size() * sizeof(double)), 0);
  EXPECT_EQ(a.labels, b.labels);
}

TEST(Solver, StatsAreConsistent) {
  QuasipotentialField const f = solve_example("example1", 33, 4);
  RunStats const& s = f.stats;
  EXPECT_LE(s.one_point_rejections, s.one_point_attempts);
  EXPECT_LE(s.triangle_sign_rejections + s.triangle_other_rejections, s.triangle_attempts);
  EXPECT_LE(s.simplex_kkt_rejections + s.simplex_newton_rejections +
                s.simplex_nonfinite_rejections,
            s.simplex_attempts);
  EXPECT_GT(s.triangle_attempts, 0u);
  EXPECT_GT(s.simplex_attempts, 0u);
  // The linear example is accepted in non-decreasing order.
  EXPECT_EQ(s.non_monotone_pops, 0u);
}

TEST(Solver, LabelDisciplineAndOneShotBookkeeping) {
  FieldCatalogEntry const* e = find_catalog_entry("example4");
  VectorField const field = builtin_field("example4");
  Grid3 const g = Grid3::from_box(e->domain_lo, e->domain_hi, 13, 13, 13);
  SolverConfig cfg;
  cfg.K = 3;
  cfg.termination = Termination::Exhaust;
  auto const far = far_offsets(cfg.K);

  // Initialization seeds the 26 neighbors directly; they are not promotions.
  std::vector<Label> prev(g.size(), Label::Unknown);
  EquilibriumInit const init = initialize_equilibrium(g, field, e->equilibrium);
  prev[init.center] = Label::AcceptedFront;
  for (auto const& [n, u] : init.neighbors) prev[n] = Label::Considered;
  std::vector<double> frozen(g.size(), kInf);
  std::size_t pops = 0, promotions = 0;
  PopObserver const obs = [&](SolverView const& v) {
    ++pops;
    for (std::size_t n = 0; n < g.size(); ++n) {
      Label const l = v.labels[n];
      // Labels only move forward.
      ASSERT_GE(static_cast<int>(l), static_cast<int>(prev[n]));
      // Finalized values never change.
      if (l == Label::AcceptedFront || l == Label::Accepted) {
        if (std::isfinite(frozen[n])) {
          ASSERT_EQ(frozen[n], v.U[n]);
        }
        frozen[n] = v.U[n];
      }
      Index3 const t = g.triple(n);
      if (l == Label::Accepted) {
        for (Index3 const& q : neighborhood(g, t, NeighborKind::All)) {
          ASSERT_NE(v.labels[g.linear(q)], Label::Considered);
        }
      }
      if (l == Label::Considered && v.q1_argmin[n] != kNoNode) {
        ASSERT_LE(v.U[n], v.q1_min[n]);
      }
      // Freshly promoted nodes: the stored one-point minimum is the
      // brute-force minimum over the Accepted Front in the far neighborhood.
      if (prev[n] == Label::Unknown && l == Label::Considered) {
        ++promotions;
        double best = kInf;
        Vec3 const x = g.coords(n);
        for (Index3 const& d : *far) {
          Index3 const s = t + d;
          if (!g.contains(s)) continue;
          std::size_t const y = g.linear(s);
          if (v.labels[y] != Label::AcceptedFront) continue;
          best = std::min(best, one_point_update(g.coords(s), v.U[y], x, field).value);
        }
        ASSERT_NEAR(v.q1_min[n], best, 1e-14 * (1.0 + best));
        ASSERT_NE(v.q1_argmin[n], kNoNode);
        std::size_t const y = v.q1_argmin[n];
        ASSERT_EQ(v.labels[y], Label::AcceptedFront);
        ASSERT_NEAR(one_point_update(g.coords(y), v.U[y], x, field).value, v.q1_min[n],
                    1e-14 * (1.0 + best));
      }
    }
    prev = v.labels;
  };
  QuasipotentialField const f = solve(g, field, e->equilibrium, cfg, obs);
  EXPECT_GT(pops, 100u);
  EXPECT_GT(promotions, 100u);
}

TEST(Solver, LargerUpdateRadiusHelpsTheLinearExample) {
  auto const err = [](int K) {
    QuasipotentialField const f = solve_example("example1", 65, K);
    return error_metrics(f, *builtin_field("example1").exact).e_nm;
  };
  EXPECT_LE(err(8), err(2));
}

TEST(Solver, InvalidConfigurationsThrow) {
  VectorField const f = builtin_field("example1");
  Grid3 const g = Grid3::from_box({-1, -1, -1}, {1, 1, 1}, 9, 9, 9);
  SolverConfig cfg;
  cfg.K = 0;
  EXPECT_THROW(solve(g, f, {0, 0, 0}, cfg), std::invalid_argument);
  cfg.K = 5;
  EXPECT_THROW(solve(g, f, {0, 0, 0}, cfg), std::invalid_argument);
  cfg.K = 2;
  EXPECT_THROW(solve(g, f, {0.1, 0, 0}, cfg), AlignmentError);
  EXPECT_THROW(solve(g, oracle::linear_drift(Mat3::identity()), {0, 0, 0}, cfg),
               StabilityError);
  cfg.factoring = true;
  cfg.factoring_radius = 0.0;
  EXPECT_THROW(solve(g, f, {0, 0, 0}, cfg), std::invalid_argument);
}

TEST(Solver, FactoringLeavesDistantNodesConsistent) {
  FieldCatalogEntry const* e = find_catalog_entry("example1");
  Grid3 const g = Grid3::from_box(e->domain_lo, e->domain_hi, 33, 33, 33);
  SolverConfig cfg;
  cfg.K = 4;
  QuasipotentialField const plain = solve(g, builtin_field("example1"), e->equilibrium, cfg);
  cfg.factoring = true;
  QuasipotentialField const fac = solve(g, builtin_field("example1"), e->equilibrium, cfg);
  auto const& ref = *builtin_field("example1").exact;
  EXPECT_LE(error_metrics(fac, ref).e_nm, error_metrics(plain, ref).e_nm);
}
