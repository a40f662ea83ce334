#ifndef QPOT3D_GRID_HPP_
#define QPOT3D_GRID_HPP_

// Regular rectangular 3D mesh, lattice neighborhoods and the admissible
// simplex base table.
//
// All neighborhood definitions are in index space: steps may differ per axis
// but "nearest" and "far" are measured on the integer lattice.
//
// Slot numbering. The 18 offsets of N1 u N2 are numbered 0..17 in
// lexicographic order of (di, dj, dk); the 8 offsets of N3 take slots 18..25,
// also lexicographic. Every table indexed by "slot" uses this numbering.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "qpot3d/linalg.hpp"

namespace qpot3d {

struct Index3 {
  int i = 0;
  int j = 0;
  int k = 0;

  friend constexpr bool operator==(Index3 const&, Index3 const&) = default;
  friend constexpr auto operator<=>(Index3 const&, Index3 const&) = default;
};

constexpr Index3 operator+(Index3 const& a, Index3 const& b) {
  return {a.i + b.i, a.j + b.j, a.k + b.k};
}
constexpr Index3 operator-(Index3 const& a, Index3 const& b) {
  return {a.i - b.i, a.j - b.j, a.k - b.k};
}

constexpr int l1_norm(Index3 const& d) {
  return (d.i < 0 ? -d.i : d.i) + (d.j < 0 ? -d.j : d.j) +
         (d.k < 0 ? -d.k : d.k);
}
constexpr int linf_norm(Index3 const& d) {
  int const a = d.i < 0 ? -d.i : d.i;
  int const b = d.j < 0 ? -d.j : d.j;
  int const c = d.k < 0 ? -d.k : d.k;
  return std::max(a, std::max(b, c));
}
constexpr int squared_length(Index3 const& d) {
  return d.i * d.i + d.j * d.j + d.k * d.k;
}

/// Geometry of a regular nx x ny x nz mesh. Node (i, j, k) sits at
/// origin + (i hx, j hy, k hz) and has linear index i + nx (j + ny k).
class Grid3 {
 public:
  Grid3(int nx, int ny, int nz, Vec3 const& steps, Vec3 const& origin)
      : n_{nx, ny, nz}, h_(steps), origin_(origin) {
    if (nx < 3 || ny < 3 || nz < 3) {
      throw std::invalid_argument("Grid3: need at least 3 nodes per axis");
    }
    if (!(steps.x > 0.0 && steps.y > 0.0 && steps.z > 0.0) ||
        !is_finite(steps)) {
      throw std::invalid_argument("Grid3: mesh steps must be positive");
    }
    if (!is_finite(origin)) {
      throw std::invalid_argument("Grid3: origin must be finite");
    }
  }

  /// Mesh spanning the box [lo, hi] with the given node counts.
  static Grid3 from_box(Vec3 const& lo, Vec3 const& hi, int nx, int ny,
                        int nz) {
    if (!(hi.x > lo.x && hi.y > lo.y && hi.z > lo.z)) {
      throw std::invalid_argument("Grid3: degenerate domain box");
    }
    if (nx < 3 || ny < 3 || nz < 3) {
      throw std::invalid_argument("Grid3: need at least 3 nodes per axis");
    }
    Vec3 const steps{(hi.x - lo.x) / (nx - 1), (hi.y - lo.y) / (ny - 1),
                     (hi.z - lo.z) / (nz - 1)};
    return Grid3(nx, ny, nz, steps, lo);
  }

  int nx() const { return n_[0]; }
  int ny() const { return n_[1]; }
  int nz() const { return n_[2]; }
  int count(int axis) const { return n_.at(static_cast<std::size_t>(axis)); }
  Vec3 const& steps() const { return h_; }
  Vec3 const& origin() const { return origin_; }
  double min_step() const { return std::min(h_.x, std::min(h_.y, h_.z)); }
  double max_step() const { return std::max(h_.x, std::max(h_.y, h_.z)); }

  std::size_t size() const {
    return static_cast<std::size_t>(n_[0]) * static_cast<std::size_t>(n_[1]) *
           static_cast<std::size_t>(n_[2]);
  }

  bool contains(Index3 const& t) const {
    return t.i >= 0 && t.j >= 0 && t.k >= 0 && t.i < n_[0] && t.j < n_[1] &&
           t.k < n_[2];
  }

  bool on_boundary(Index3 const& t) const {
    return t.i == 0 || t.j == 0 || t.k == 0 || t.i == n_[0] - 1 ||
           t.j == n_[1] - 1 || t.k == n_[2] - 1;
  }

  std::size_t linear(Index3 const& t) const {
    return static_cast<std::size_t>(t.i) +
           static_cast<std::size_t>(n_[0]) *
               (static_cast<std::size_t>(t.j) +
                static_cast<std::size_t>(n_[1]) * static_cast<std::size_t>(t.k));
  }

  Index3 triple(std::size_t idx) const {
    auto const nx = static_cast<std::size_t>(n_[0]);
    auto const ny = static_cast<std::size_t>(n_[1]);
    return {static_cast<int>(idx % nx), static_cast<int>((idx / nx) % ny),
            static_cast<int>(idx / (nx * ny))};
  }

  /// Node coordinates, computed by multiplication so there is no drift.
  Vec3 coords(Index3 const& t) const {
    return {origin_.x + t.i * h_.x, origin_.y + t.j * h_.y,
            origin_.z + t.k * h_.z};
  }
  Vec3 coords(std::size_t idx) const { return coords(triple(idx)); }

  /// Upper corner of the domain box.
  Vec3 upper() const { return coords(Index3{n_[0] - 1, n_[1] - 1, n_[2] - 1}); }

  /// Continuous index-space position of a point (may be fractional).
  Vec3 to_index_space(Vec3 const& p) const {
    return {(p.x - origin_.x) / h_.x, (p.y - origin_.y) / h_.y,
            (p.z - origin_.z) / h_.z};
  }

  friend bool operator==(Grid3 const&, Grid3 const&) = default;

 private:
  std::array<int, 3> n_;
  Vec3 h_;
  Vec3 origin_;
};

enum class NeighborKind { N1, N2, N3, All };

struct NeighborOffset {
  Index3 d;
  int slot = -1;
};

namespace detail {

inline std::array<NeighborOffset, 26> build_neighbor_offsets() {
  std::array<NeighborOffset, 26> out{};
  int near = 0;
  int corner = 18;
  for (int di = -1; di <= 1; ++di) {
    for (int dj = -1; dj <= 1; ++dj) {
      for (int dk = -1; dk <= 1; ++dk) {
        Index3 const d{di, dj, dk};
        int const l1 = l1_norm(d);
        if (l1 == 0) {
          continue;
        }
        if (l1 <= 2) {
          out[static_cast<std::size_t>(near)] = {d, near};
          ++near;
        } else {
          out[static_cast<std::size_t>(corner)] = {d, corner};
          ++corner;
        }
      }
    }
  }
  return out;
}

}  // namespace detail

/// All 26 nearest offsets, indexed by slot.
inline std::array<NeighborOffset, 26> const& neighbor_offsets() {
  static std::array<NeighborOffset, 26> const table =
      detail::build_neighbor_offsets();
  return table;
}

/// Slot of an offset in the nearest neighborhood, or -1.
inline int slot_of(Index3 const& d) {
  if (linf_norm(d) != 1) {
    return -1;
  }
  for (auto const& o : neighbor_offsets()) {
    if (o.d == d) {
      return o.slot;
    }
  }
  return -1;
}

inline bool kind_matches(Index3 const& d, NeighborKind kind) {
  int const l1 = l1_norm(d);
  switch (kind) {
    case NeighborKind::N1:
      return l1 == 1;
    case NeighborKind::N2:
      return l1 == 2;
    case NeighborKind::N3:
      return l1 == 3;
    case NeighborKind::All:
      return true;
  }
  return false;
}

/// Lattice neighbors of x0 of the given kind, clipped to the grid.
inline std::vector<Index3> neighborhood(Grid3 const& grid, Index3 const& x0,
                                        NeighborKind kind) {
  if (!grid.contains(x0)) {
    throw std::out_of_range("neighborhood: node outside the grid");
  }
  std::vector<Index3> out;
  out.reserve(26);
  for (auto const& o : neighbor_offsets()) {
    if (!kind_matches(o.d, kind)) {
      continue;
    }
    Index3 const t = x0 + o.d;
    if (grid.contains(t)) {
      out.push_back(t);
    }
  }
  return out;
}

/// Offsets of the truncated far neighborhood for update factor K: a box
/// slightly larger than the Euclidean ball of radius K, ordered by
/// increasing length (ties lexicographic).
inline std::vector<Index3> far_offsets_uncached(int K) {
  if (K <= 0) {
    throw std::invalid_argument("far_offsets: K must be positive");
  }
  auto const ceil_sqrt = [](int v) {
    int r = static_cast<int>(std::sqrt(static_cast<double>(v)));
    while (r * r < v) {
      ++r;
    }
    while (r > 0 && (r - 1) * (r - 1) >= v) {
      --r;
    }
    return r;
  };
  int const K2 = K * K;
  std::vector<Index3> out;
  for (int di = -K; di <= K; ++di) {
    int const jmax = ceil_sqrt(K2 - di * di);
    for (int dj = -jmax; dj <= jmax; ++dj) {
      int const kmax = ceil_sqrt(K2 - std::min(di * di + dj * dj, K2));
      for (int dk = -kmax; dk <= kmax; ++dk) {
        if (di == 0 && dj == 0 && dk == 0) {
          continue;
        }
        out.push_back({di, dj, dk});
      }
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](Index3 const& a, Index3 const& b) {
                     return squared_length(a) < squared_length(b);
                   });
  return out;
}

/// Memoized far_offsets_uncached. The returned table is immutable and may be
/// shared between threads.
inline std::shared_ptr<std::vector<Index3> const> far_offsets(int K) {
  static std::mutex mu;
  static std::map<int, std::shared_ptr<std::vector<Index3> const>> cache;
  if (K <= 0) {
    throw std::invalid_argument("far_offsets: K must be positive");
  }
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(K);
  if (it == cache.end()) {
    it = cache
             .emplace(K, std::make_shared<std::vector<Index3> const>(
                             far_offsets_uncached(K)))
             .first;
  }
  return it->second;
}

/// True if {a, b, c} is a right isosceles triangle whose legs are unit
/// lattice steps from the right-angle vertex.
constexpr bool is_admissible_base(Index3 const& a, Index3 const& b,
                                  Index3 const& c) {
  auto const right_at = [](Index3 const& r, Index3 const& p, Index3 const& q) {
    Index3 const u = p - r;
    Index3 const v = q - r;
    return l1_norm(u) == 1 && l1_norm(v) == 1 &&
           (u.i * v.i + u.j * v.j + u.k * v.k) == 0;
  };
  return right_at(a, b, c) || right_at(b, a, c) || right_at(c, a, b);
}

/// For an anchor node and a neighbor slot a (both in N1 u N2 numbering), the
/// slots c such that {anchor, anchor + off_a, anchor + off_c} is an
/// admissible simplex base. Generated from the geometric predicate.
class SimplexBaseTable {
 public:
  SimplexBaseTable() {
    auto const& offs = neighbor_offsets();
    for (int a = 0; a < 18; ++a) {
      for (int c = 0; c < 18; ++c) {
        if (a == c) {
          continue;
        }
        if (is_admissible_base(Index3{0, 0, 0},
                               offs[static_cast<std::size_t>(a)].d,
                               offs[static_cast<std::size_t>(c)].d)) {
          thirds_[static_cast<std::size_t>(a)].push_back(c);
        }
      }
    }
  }

  std::vector<int> const& thirds(int a) const {
    return thirds_.at(static_cast<std::size_t>(a));
  }

  /// True for the one ordering (a < c) of each unordered base.
  static constexpr bool canonical(int a, int c) { return a < c; }

  /// Number of distinct bases containing the anchor.
  std::size_t distinct_bases() const {
    std::size_t n = 0;
    for (int a = 0; a < 18; ++a) {
      for (int c : thirds(a)) {
        n += canonical(a, c) ? 1 : 0;
      }
    }
    return n;
  }

  static SimplexBaseTable const& instance() {
    static SimplexBaseTable const table;
    return table;
  }

 private:
  std::array<std::vector<int>, 18> thirds_;
};

}  // namespace qpot3d

#endif  // QPOT3D_GRID_HPP_
