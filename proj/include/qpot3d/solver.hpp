#ifndef QPOT3D_SOLVER_HPP_
#define QPOT3D_SOLVER_HPP_

// Label-setting solver for the quasipotential on a regular 3D mesh with the
// hierarchical update strategy: triangle and simplex updates for a node x are
// only tried around the base of its smallest one-point update.

#include <algorithm>
#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "qpot3d/fields.hpp"
#include "qpot3d/grid.hpp"
#include "qpot3d/heap.hpp"
#include "qpot3d/linalg.hpp"
#include "qpot3d/lyapunov.hpp"
#include "qpot3d/updates.hpp"

namespace qpot3d {

enum class Label : std::uint8_t { Unknown, Considered, AcceptedFront, Accepted };

enum class Termination : std::uint8_t { BoundaryHit, Exhaust };

inline char const* to_string(Termination t) {
  return t == Termination::BoundaryHit ? "boundary_hit" : "exhaust";
}

struct SolverConfig {
  int K = 6;
  bool factoring = false;
  double factoring_radius = 0.1;
  Termination termination = Termination::BoundaryHit;
  UpdateTolerances tolerances;

  void validate(Grid3 const& grid) const {
    int const nmin = std::min(grid.nx(), std::min(grid.ny(), grid.nz()));
    if (K < 1 || 2 * K > nmin) {
      throw std::invalid_argument("K must satisfy 1 <= K <= min(nx,ny,nz)/2, got " +
                                  std::to_string(K));
    }
    if (factoring && !(factoring_radius > 0.0)) {
      throw std::invalid_argument("factoring radius must be positive");
    }
  }
};

struct RunStats {
  std::uint64_t one_point_attempts = 0;
  std::uint64_t one_point_rejections = 0;
  std::uint64_t triangle_attempts = 0;
  std::uint64_t triangle_sign_rejections = 0;
  std::uint64_t triangle_other_rejections = 0;
  std::uint64_t simplex_attempts = 0;
  std::uint64_t simplex_kkt_rejections = 0;
  std::uint64_t simplex_newton_rejections = 0;
  std::uint64_t simplex_nonfinite_rejections = 0;
  std::uint64_t accepted_nodes = 0;
  /// Pops whose value was below the previous pop (lowered by an
  /// interpolating update after the neighbor was finalized).
  std::uint64_t non_monotone_pops = 0;
  double max_monotonicity_defect = 0.0;
  double wall_seconds = 0.0;
  bool boundary_reached = false;

  double triangle_sign_fraction() const {
    return triangle_attempts == 0
               ? 0.0
               : static_cast<double>(triangle_sign_rejections) /
                     static_cast<double>(triangle_attempts);
  }
  double simplex_kkt_fraction() const {
    return simplex_attempts == 0
               ? 0.0
               : static_cast<double>(simplex_kkt_rejections) /
                     static_cast<double>(simplex_attempts);
  }
};

/// Solved quasipotential. Only finalized nodes (Accepted Front or Accepted)
/// carry values; everything else is +inf.
struct QuasipotentialField {
  Grid3 grid;
  std::vector<double> U;
  std::vector<Label> labels;
  Vec3 equilibrium;
  std::size_t equilibrium_node = 0;
  Mat3 Q;
  SolverConfig config;
  RunStats stats;

  bool reached(std::size_t n) const { return std::isfinite(U[n]); }
  double at(Index3 const& t) const { return U[grid.linear(t)]; }
};

/// Read-only view of the solver state handed to an observer after every pop.
struct SolverView {
  Grid3 const& grid;
  std::vector<double> const& U;
  std::vector<Label> const& labels;
  std::vector<double> const& q1_min;
  std::vector<std::uint32_t> const& q1_argmin;
  std::size_t popped;
  double popped_value;
};

using PopObserver = std::function<void(SolverView const&)>;

inline constexpr std::uint32_t kNoNode = std::numeric_limits<std::uint32_t>::max();

namespace detail {

/// Slot of a nearest offset, indexed by (di+1)*9 + (dj+1)*3 + (dk+1).
inline std::array<int, 27> const& slot_lookup() {
  static std::array<int, 27> const table = [] {
    std::array<int, 27> t{};
    t.fill(-1);
    for (auto const& o : neighbor_offsets()) {
      t[static_cast<std::size_t>((o.d.i + 1) * 9 + (o.d.j + 1) * 3 +
                                 (o.d.k + 1))] = o.slot;
    }
    return t;
  }();
  return table;
}

inline int near_slot(Index3 const& d) {
  if (linf_norm(d) != 1) {
    return -1;
  }
  return slot_lookup()[static_cast<std::size_t>((d.i + 1) * 9 + (d.j + 1) * 3 +
                                                (d.k + 1))];
}

class Solver {
 public:
  Solver(Grid3 const& grid, VectorField const& field, Vec3 const& x_star,
         SolverConfig const& cfg, JacobianPolicy policy,
         PopObserver observer)
      : grid_(grid),
        field_(field),
        cfg_(cfg),
        observer_(std::move(observer)),
        U_(grid.size(), kInf),
        label_(grid.size(), Label::Unknown),
        q1_min_(grid.size(), kInf),
        q1_arg_(grid.size(), kNoNode),
        heap_(U_) {
    cfg_.validate(grid_);
    if (grid_.size() >= kNoNode) {
      throw std::invalid_argument("mesh too large for 32-bit node indices");
    }
    init_ = initialize_equilibrium(grid_, field_, x_star, policy);
    x_star_ = x_star;
    if (cfg_.factoring) {
      fac_.enabled = true;
      fac_.center = grid_.coords(init_.center);
      fac_.Q = init_.qmat.Q;
      fac_.radius = cfg_.factoring_radius;
    }
    auto const nx = static_cast<std::ptrdiff_t>(grid_.nx());
    auto const nxy = nx * static_cast<std::ptrdiff_t>(grid_.ny());
    for (Index3 const& d : *far_offsets(cfg_.K)) {
      far_.push_back({d, d.i + nx * d.j + nxy * d.k});
    }
  }

  QuasipotentialField run() {
    auto const t0 = std::chrono::steady_clock::now();
    U_[init_.center] = 0.0;
    label_[init_.center] = Label::AcceptedFront;
    ++stats_.accepted_nodes;
    for (auto const& [n, v] : init_.neighbors) {
      U_[n] = v;
      label_[n] = Label::Considered;
      heap_.push(n);
    }
    if (heap_.empty()) {
      throw std::runtime_error("solver: no considered nodes after initialization");
    }

    double last = 0.0;
    while (!heap_.empty()) {
      std::size_t const xn = heap_.pop();
      if (!std::isfinite(U_[xn])) {
        label_[xn] = Label::Unknown;
        U_[xn] = kInf;
        break;
      }
      if (U_[xn] < last) {
        ++stats_.non_monotone_pops;
        stats_.max_monotonicity_defect =
            std::max(stats_.max_monotonicity_defect, last - U_[xn]);
      }
      last = std::max(last, U_[xn]);
      label_[xn] = Label::AcceptedFront;
      ++stats_.accepted_nodes;
      Index3 const tn = grid_.triple(xn);
      if (grid_.on_boundary(tn)) {
        stats_.boundary_reached = true;
        if (cfg_.termination == Termination::BoundaryHit) {
          notify(xn);
          break;
        }
      }
      retire_around(tn);
      update_considered(xn, tn);
      promote_unknown(xn, tn);
      notify(xn);
    }

    QuasipotentialField out{grid_, {}, label_, x_star_, init_.center,
                            init_.qmat.Q, cfg_, stats_};
    out.U.assign(grid_.size(), kInf);
    for (std::size_t n = 0; n < grid_.size(); ++n) {
      if (label_[n] == Label::AcceptedFront || label_[n] == Label::Accepted) {
        out.U[n] = U_[n];
      }
    }
    out.stats.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    return out;
  }

 private:
  /// AcceptedFront nodes among the 18 N1 u N2 neighbors of an anchor.
  struct Front {
    std::size_t anchor = 0;
    Index3 t;
    std::array<std::uint32_t, 18> node{};
    std::uint32_t mask = 0;

    bool has(int slot) const { return (mask >> slot) & 1u; }
  };

  struct FarOffset {
    Index3 d;
    std::ptrdiff_t lin = 0;
  };

  /// True when the whole far neighborhood of t lies inside the grid.
  bool deep_inside(Index3 const& t) const {
    int const K = cfg_.K;
    return t.i >= K && t.j >= K && t.k >= K && t.i < grid_.nx() - K &&
           t.j < grid_.ny() - K && t.k < grid_.nz() - K;
  }

  /// Midpoint drift values b((v + x) / 2) for one target x, cached per node.
  struct MidpointCache {
    std::array<std::uint32_t, 20> node{};
    std::array<Vec3, 20> value{};
    std::size_t count = 0;
  };

  void notify(std::size_t xn) {
    if (observer_) {
      observer_(SolverView{grid_, U_, label_, q1_min_, q1_arg_, xn, U_[xn]});
    }
  }

  Front front_of(std::size_t anchor, Index3 const& t) const {
    Front f;
    f.anchor = anchor;
    f.t = t;
    auto const& offs = neighbor_offsets();
    for (int s = 0; s < 18; ++s) {
      Index3 const q = t + offs[static_cast<std::size_t>(s)].d;
      if (!grid_.contains(q)) {
        continue;
      }
      std::size_t const n = grid_.linear(q);
      if (label_[n] == Label::AcceptedFront) {
        f.node[static_cast<std::size_t>(s)] = static_cast<std::uint32_t>(n);
        f.mask |= 1u << s;
      }
    }
    return f;
  }

  bool has_considered_neighbor(Index3 const& t) const {
    for (auto const& o : neighbor_offsets()) {
      Index3 const q = t + o.d;
      if (grid_.contains(q) && label_[grid_.linear(q)] == Label::Considered) {
        return true;
      }
    }
    return false;
  }

  void retire_around(Index3 const& tn) {
    for (auto const& o : neighbor_offsets()) {
      Index3 const q = tn + o.d;
      if (!grid_.contains(q)) {
        continue;
      }
      std::size_t const n = grid_.linear(q);
      if (label_[n] == Label::AcceptedFront && !has_considered_neighbor(q)) {
        label_[n] = Label::Accepted;
      }
    }
  }

  Vec3 midpoint(MidpointCache& c, std::size_t v, Vec3 const& xc) const {
    for (std::size_t i = 0; i < c.count; ++i) {
      if (c.node[i] == v) {
        return c.value[i];
      }
    }
    Vec3 const b = field_.eval(0.5 * (grid_.coords(v) + xc));
    if (c.count == c.node.size()) {
      c.count = 0;
    }
    c.node[c.count] = static_cast<std::uint32_t>(v);
    c.value[c.count] = b;
    ++c.count;
    return b;
  }

  void relax(std::size_t x, double v) {
    if (v < U_[x]) {
      U_[x] = v;
      if (heap_.contains(x)) {
        heap_.decrease(x);
      }
    }
  }

  /// One-point update of x from base v; returns its value (inf if rejected).
  double one_point(std::size_t x, Vec3 const& xc, std::size_t v,
                   Vec3 const& vc) {
    ++stats_.one_point_attempts;
    Vec3 const bm = field_.eval(0.5 * (vc + xc));
    if (!is_finite(bm)) {
      ++stats_.one_point_rejections;
      return kInf;
    }
    double const q = U_[v] + segment_action(bm, xc - vc);
    relax(x, q);
    return q;
  }

  UpdateProposal triangle(std::size_t x, Vec3 const& xc, std::size_t v0,
                          std::size_t v1, MidpointCache& mc) {
    ++stats_.triangle_attempts;
    Vec3 const b0 = midpoint(mc, v0, xc);
    Vec3 const b1 = midpoint(mc, v1, xc);
    if (!is_finite(b0) || !is_finite(b1)) {
      ++stats_.triangle_other_rejections;
      return {};
    }
    TriangleProblem const t =
        make_triangle(grid_.coords(v0), grid_.coords(v1), U_[v0], U_[v1], xc,
                      b0, b1, fac_.enabled ? &fac_ : nullptr);
    UpdateProposal const p = triangle_update(t, cfg_.tolerances);
    if (p.outcome == UpdateOutcome::SignTest) {
      ++stats_.triangle_sign_rejections;
    } else if (!p.interior) {
      ++stats_.triangle_other_rejections;
    } else {
      relax(x, p.value);
    }
    return p;
  }

  void simplex(std::size_t x, Vec3 const& xc, std::size_t v0, std::size_t v1,
               std::size_t v2, UpdateProposal const& warm, MidpointCache& mc) {
    ++stats_.simplex_attempts;
    Vec3 const b0 = midpoint(mc, v0, xc);
    Vec3 const b1 = midpoint(mc, v1, xc);
    Vec3 const b2 = midpoint(mc, v2, xc);
    if (!is_finite(b0) || !is_finite(b1) || !is_finite(b2)) {
      ++stats_.simplex_nonfinite_rejections;
      return;
    }
    SimplexProblem const s = make_simplex(
        grid_.coords(v0), grid_.coords(v1), grid_.coords(v2), U_[v0], U_[v1],
        U_[v2], xc, b0, b1, b2, fac_.enabled ? &fac_ : nullptr);
    UpdateProposal const p =
        simplex_update(s, warm.lambda.a, warm.value, cfg_.tolerances);
    switch (p.outcome) {
      case UpdateOutcome::Interior:
        relax(x, p.value);
        break;
      case UpdateOutcome::KktSkip:
        ++stats_.simplex_kkt_rejections;
        break;
      case UpdateOutcome::NonFinite:
        ++stats_.simplex_nonfinite_rejections;
        break;
      default:
        ++stats_.simplex_newton_rejections;
        break;
    }
  }

  /// Triangle updates (anchor, y, x) for every y in the anchor's front,
  /// followed by simplex updates (anchor, y, z, x) on interior solutions.
  /// Each unordered base {y, z} is tried once.
  void cascade_from_anchor(std::size_t x, Vec3 const& xc, Front const& f,
                           MidpointCache& mc) {
    auto const& table = SimplexBaseTable::instance();
    std::array<std::uint32_t, 18> tried{};
    for (int a = 0; a < 18; ++a) {
      if (!f.has(a)) {
        continue;
      }
      std::size_t const y = f.node[static_cast<std::size_t>(a)];
      UpdateProposal const tri = triangle(x, xc, f.anchor, y, mc);
      if (!tri.interior) {
        continue;
      }
      for (int c : table.thirds(a)) {
        if (!f.has(c)) {
          continue;
        }
        int const lo = std::min(a, c);
        int const hi = std::max(a, c);
        if ((tried[static_cast<std::size_t>(lo)] >> hi) & 1u) {
          continue;
        }
        tried[static_cast<std::size_t>(lo)] |= 1u << hi;
        simplex(x, xc, f.anchor, y, f.node[static_cast<std::size_t>(c)], tri,
                mc);
      }
    }
  }

  void update_considered(std::size_t xn, Index3 const& tn) {
    Front const an = front_of(xn, tn);
    auto const& table = SimplexBaseTable::instance();
    bool const deep = deep_inside(tn);
    Vec3 const xnc = grid_.coords(tn);
    for (FarOffset const& o : far_) {
      Index3 const t = tn + o.d;
      if (!deep && !grid_.contains(t)) {
        continue;
      }
      auto const x = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(xn) + o.lin);
      if (label_[x] != Label::Considered) {
        continue;
      }
      Vec3 const xc = grid_.coords(t);
      MidpointCache mc;
      double const q = one_point(x, xc, xn, xnc);
      if (q < q1_min_[x]) {
        q1_min_[x] = q;
        q1_arg_[x] = static_cast<std::uint32_t>(xn);
        cascade_from_anchor(x, xc, an, mc);
        continue;
      }
      std::uint32_t const x0 = q1_arg_[x];
      if (x0 == kNoNode) {
        continue;
      }
      int const s0 = near_slot(grid_.triple(x0) - tn);
      if (s0 < 0 || s0 >= 18 || !an.has(s0)) {
        continue;
      }
      UpdateProposal const tri = triangle(x, xc, x0, xn, mc);
      if (!tri.interior) {
        continue;
      }
      for (int c : table.thirds(s0)) {
        if (an.has(c)) {
          simplex(x, xc, x0, xn, an.node[static_cast<std::size_t>(c)], tri, mc);
        }
      }
    }
  }

  void promote_unknown(std::size_t xn, Index3 const& tn) {
    (void)xn;
    for (auto const& o : neighbor_offsets()) {
      Index3 const t = tn + o.d;
      if (!grid_.contains(t)) {
        continue;
      }
      std::size_t const x = grid_.linear(t);
      if (label_[x] != Label::Unknown) {
        continue;
      }
      label_[x] = Label::Considered;
      Vec3 const xc = grid_.coords(t);
      bool const deep = deep_inside(t);
      for (FarOffset const& o : far_) {
        Index3 const s = t + o.d;
        if (!deep && !grid_.contains(s)) {
          continue;
        }
        auto const y = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(x) + o.lin);
        if (label_[y] != Label::AcceptedFront) {
          continue;
        }
        double const q = one_point(x, xc, y, grid_.coords(s));
        if (q < q1_min_[x]) {
          q1_min_[x] = q;
          q1_arg_[x] = static_cast<std::uint32_t>(y);
        }
      }
      if (q1_arg_[x] != kNoNode) {
        std::size_t const x0 = q1_arg_[x];
        Front const f = front_of(x0, grid_.triple(x0));
        MidpointCache mc;
        cascade_from_anchor(x, xc, f, mc);
      }
      heap_.push(x);
    }
  }

  Grid3 grid_;
  VectorField const& field_;
  SolverConfig cfg_;
  PopObserver observer_;
  std::vector<double> U_;
  std::vector<Label> label_;
  std::vector<double> q1_min_;
  std::vector<std::uint32_t> q1_arg_;
  IndexedMinHeap heap_;
  EquilibriumInit init_;
  Vec3 x_star_;
  FactoringContext fac_;
  std::vector<FarOffset> far_;
  RunStats stats_;
};

}  // namespace detail

/// Computes the quasipotential with respect to the stable equilibrium x_star,
/// which must be a mesh node.
inline QuasipotentialField solve(Grid3 const& grid, VectorField const& field,
                                 Vec3 const& x_star, SolverConfig const& cfg,
                                 JacobianPolicy policy,
                                 PopObserver observer = {}) {
  detail::Solver s(grid, field, x_star, cfg, policy, std::move(observer));
  return s.run();
}

inline QuasipotentialField solve(Grid3 const& grid, VectorField const& field,
                                 Vec3 const& x_star, SolverConfig const& cfg,
                                 PopObserver observer = {}) {
  JacobianPolicy p = field.default_policy;
  if (p == JacobianPolicy::Exact && !field.jacobian) {
    p = JacobianPolicy::FiniteDifference;
  }
  return solve(grid, field, x_star, cfg, p, std::move(observer));
}

}  // namespace qpot3d

#endif  // QPOT3D_SOLVER_HPP_
