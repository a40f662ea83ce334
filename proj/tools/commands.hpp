#ifndef QPOT3D_TOOLS_COMMANDS_HPP_
#define QPOT3D_TOOLS_COMMANDS_HPP_

// Subcommands of the qpot3d tool. Each returns a process exit code:
// 0 success, 1 runtime failure, 2 configuration error.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "qpot3d/config.hpp"
#include "qpot3d/io.hpp"
#include "qpot3d/postprocess.hpp"
#include "qpot3d/solver.hpp"

namespace qpot3d::cli {

namespace fs = std::filesystem;

struct Solved {
  VectorField field;
  QuasipotentialField result;
};

/// Identifies a solve; a saved grid is reused only when this matches.
inline json solve_signature(RunConfig const& c) {
  json params = json::object();
  for (auto const& [k, v] : c.params) {
    params[k] = v;
  }
  return {{"field", c.field_id},
          {"params", params},
          {"lo", to_json(c.lo)},
          {"hi", to_json(c.hi)},
          {"n", c.n},
          {"equilibrium", to_json(c.equilibrium)},
          {"K", c.resolved_K()},
          {"factoring", c.factoring},
          {"factoring_radius", c.factoring_radius},
          {"termination", to_string(c.termination)}};
}

inline Solved solve_config(RunConfig const& c) {
  VectorField field = builtin_field(c.field_id, c.params);
  if (c.field_id == "genetic_switch") {
    for (auto const& w : check_genetic_switch_equilibria(field)) {
      std::cerr << "warning: " << w << '\n';
    }
  }
  QuasipotentialField r = solve(c.grid(), field, c.equilibrium, c.solver_config());
  return {std::move(field), std::move(r)};
}

inline std::optional<ErrorMetrics> metrics_for(Solved const& s, RunConfig const& c) {
  if (!c.exact || !s.field.exact) {
    return std::nullopt;
  }
  try {
    return error_metrics(s.result, *s.field.exact);
  } catch (DomainError const&) {
    return std::nullopt;
  }
}

inline void write_outputs(fs::path const& dir, Solved const& s, RunConfig const& c) {
  save_field(dir, s.result, c);
  json meta = meta_json(s.result, c);
  meta["signature"] = solve_signature(c);
  write_json(dir / "meta.json", meta);
  json stats = stats_json(s.result.stats);
  if (auto m = metrics_for(s, c)) {
    stats["errors"] = metrics_json(*m);
    stats["errors"]["reference"] = s.field.exact->is_false_reference
                                       ? "false_quasipotential"
                                       : "exact";
  }
  write_json(dir / "stats.json", stats);
}

inline int cmd_solve(RunConfig const& c) {
  Solved const s = solve_config(c);
  write_outputs(c.output, s, c);
  std::cout << "solved " << c.field_id << " on " << c.n[0] << "x" << c.n[1]
            << "x" << c.n[2] << " (K=" << s.result.config.K << ", "
            << s.result.stats.accepted_nodes << " nodes accepted) -> "
            << c.output << '\n';
  return 0;
}

/// Loads the saved field in the output directory when it was produced by the
/// same solve, otherwise solves and saves.
inline Solved obtain_field(RunConfig const& c) {
  fs::path const dir = c.output;
  VectorField field = builtin_field(c.field_id, c.params);
  if (fs::exists(dir / "u.grid") && fs::exists(dir / "meta.json")) {
    std::ifstream in(dir / "meta.json");
    json const meta = json::parse(in, nullptr, false);
    if (!meta.is_discarded() && meta.contains("signature") &&
        meta["signature"] == solve_signature(c)) {
      return {std::move(field), load_field(dir)};
    }
  }
  Solved s = solve_config(c);
  write_outputs(dir, s, c);
  return s;
}

struct ConvergenceJob {
  int N = 0;
  int K = 0;
};

inline std::vector<ConvergenceJob> convergence_jobs(RunConfig const& c) {
  std::vector<int> Ns = c.convergence.N;
  if (Ns.empty()) {
    Ns = {33, 65, 129};
  }
  std::vector<int> const& Ks = c.convergence.K;
  std::vector<ConvergenceJob> jobs;
  if (Ks.empty()) {
    for (int n : Ns) jobs.push_back({n, guideline_K(n)});
  } else if (Ks.size() == Ns.size()) {
    for (std::size_t i = 0; i < Ns.size(); ++i) jobs.push_back({Ns[i], Ks[i]});
  } else {
    for (int n : Ns) {
      for (int k : Ks) jobs.push_back({n, k});
    }
  }
  for (auto const& j : jobs) {
    if (j.N < 3) {
      throw ConfigError("convergence mesh sizes must be at least 3");
    }
    if (j.N % 2 == 0) {
      throw ConfigError("convergence mesh sizes must be odd so the equilibrium stays on the mesh");
    }
  }
  return jobs;
}

struct ConvergenceRow {
  ConvergenceJob job;
  double h = 0.0;
  ErrorMetrics metrics;
  double wall = 0.0;
};

inline int cmd_convergence(RunConfig const& base, int workers) {
  std::vector<ConvergenceJob> const jobs = convergence_jobs(base);
  // Validate every job before launching any solve.
  std::vector<RunConfig> configs;
  for (auto const& j : jobs) {
    json doc = base.source;
    doc["mesh"] = j.N;
    doc["K"] = j.K;
    doc.erase("convergence");
    RunConfig c = parse_config(doc);
    c.output = base.output;
    configs.push_back(std::move(c));
  }

  std::vector<std::optional<ConvergenceRow>> rows(jobs.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex err_mu;
  std::string first_error;
  auto worker = [&] {
    for (;;) {
      if (failed.load()) return;
      std::size_t const i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        Solved const s = solve_config(configs[i]);
        auto m = metrics_for(s, configs[i]);
        if (!m) {
          throw std::runtime_error("field '" + configs[i].field_id +
                                   "' has no reference solution for error metrics");
        }
        rows[i] = ConvergenceRow{jobs[i], s.result.grid.max_step(), *m,
                                 s.result.stats.wall_seconds};
      } catch (std::exception const& e) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!failed.exchange(true)) {
          first_error = "N=" + std::to_string(jobs[i].N) + " K=" +
                        std::to_string(jobs[i].K) + ": " + e.what();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  int const nthreads = std::max(1, std::min<int>(workers, static_cast<int>(jobs.size())));
  for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  fs::create_directories(base.output);
  CsvWriter csv(fs::path(base.output) / "convergence.csv");
  csv.row(std::vector<std::string>{"kind", "N", "h", "K", "E_NM", "E_NR",
                                   "wall_time_s", "metric", "C", "q"});
  std::map<int, std::vector<ConvergenceRow const*>> by_K;
  bool const zipped = base.convergence.K.empty() ||
                      base.convergence.K.size() == base.convergence.N.size();
  for (auto const& r : rows) {
    if (!r) continue;
    csv.row("solve", r->job.N, r->h, r->job.K, r->metrics.e_nm, r->metrics.e_nr,
            r->wall, "", "", "");
    by_K[zipped ? 0 : r->job.K].push_back(&*r);
  }
  if (!failed.load()) {
    for (auto const& [k, group] : by_K) {
      std::vector<std::pair<double, double>> nm, nr;
      for (auto const* r : group) {
        nm.emplace_back(r->h, r->metrics.e_nm);
        nr.emplace_back(r->h, r->metrics.e_nr);
      }
      bool distinct_h = false;
      for (auto const& p : nm) distinct_h = distinct_h || p.first != nm.front().first;
      if (!distinct_h) continue;
      try {
        PowerFit const a = convergence_fit(nm);
        PowerFit const b = convergence_fit(nr);
        std::string const kcell = zipped ? "" : std::to_string(k);
        csv.row("fit", "", "", kcell, "", "", "", "E_NM", a.C, a.q);
        csv.row("fit", "", "", kcell, "", "", "", "E_NR", b.C, b.q);
      } catch (std::invalid_argument const&) {
      }
    }
  }
  if (failed.load()) {
    std::cerr << "error: convergence solve failed (" << first_error
              << "); partial results written\n";
    return 1;
  }
  std::cout << "convergence study with " << jobs.size() << " solves -> "
            << base.output << "/convergence.csv\n";
  return 0;
}

inline int cmd_trace_map(RunConfig const& c) {
  if (c.map_starts.empty()) {
    std::cout << "no start points\n";
    return 0;
  }
  Solved const s = obtain_field(c);
  fs::path const dir = c.output;
  CsvWriter summary(dir / "maps.csv");
  summary.row(std::vector<std::string>{"index", "start_x", "start_y", "start_z",
                                       "status", "stop", "points", "U_start",
                                       "action", "message"});
  for (std::size_t i = 0; i < c.map_starts.size(); ++i) {
    Vec3 const p = c.map_starts[i];
    try {
      TraceResult const tr = trace_map(s.result, s.field, p);
      std::vector<double> const arc = arclength(tr.path);
      CsvWriter out(dir / ("map_" + std::to_string(i) + ".csv"));
      out.row(std::vector<std::string>{"x", "y", "z", "U_interpolated", "arclength"});
      for (std::size_t k = 0; k < tr.path.size(); ++k) {
        Vec3 const& q = tr.path[k];
        double u = std::numeric_limits<double>::quiet_NaN();
        try {
          u = interpolate(s.result, q);
        } catch (DomainError const&) {
        }
        out.row(q.x, q.y, q.z, u, arc[k]);
      }
      double const u0 = interpolate(s.result, tr.path.front());
      double const action =
          tr.path.size() >= 2 ? geometric_action_along(s.field, tr.path, u0) : u0;
      summary.row(i, p.x, p.y, p.z, "ok", to_string(tr.stop), tr.path.size(),
                  interpolate(s.result, p), action, "");
    } catch (std::exception const& e) {
      summary.row(i, p.x, p.y, p.z, "error", "", 0, "", "", e.what());
      std::cerr << "map " << i << ": " << e.what() << '\n';
    }
  }
  std::cout << "traced " << c.map_starts.size() << " paths -> " << c.output << '\n';
  return 0;
}

inline int cmd_slice(RunConfig const& c) {
  Grid3 const g = c.grid();
  int const axis = c.slice.axis;
  double const lo = axis == 0 ? g.origin().x : axis == 1 ? g.origin().y : g.origin().z;
  double const step = axis == 0 ? g.steps().x : axis == 1 ? g.steps().y : g.steps().z;
  int const n = g.count(axis);
  double const hi = lo + step * (n - 1);
  double const tol = 1e-9 * step;
  if (!(c.slice.coordinate >= lo - tol && c.slice.coordinate <= hi + tol)) {
    throw ConfigError("slice coordinate lies outside the domain");
  }
  int const plane = std::clamp(
      static_cast<int>(std::lround((c.slice.coordinate - lo) / step)), 0, n - 1);
  Solved const s = obtain_field(c);
  char const* names = "xyz";
  CsvWriter out(fs::path(c.output) / "slice.csv");
  out.row(std::vector<std::string>{"plane_axis", "plane_index", "plane_coord", "i",
                                   "j", "k", "x", "y", "z", "U"});
  double const pc = lo + step * plane;
  for (int k = 0; k < g.nz(); ++k) {
    for (int j = 0; j < g.ny(); ++j) {
      for (int i = 0; i < g.nx(); ++i) {
        Index3 const t{i, j, k};
        int const along = axis == 0 ? i : axis == 1 ? j : k;
        if (along != plane) continue;
        Vec3 const x = g.coords(t);
        out.row(std::string(1, names[axis]), plane, pc, i, j, k, x.x, x.y, x.z,
                s.result.at(t));
      }
    }
  }
  std::cout << "slice " << names[axis] << "=" << pc << " -> " << c.output
            << "/slice.csv\n";
  return 0;
}

}  // namespace qpot3d::cli

#endif  // QPOT3D_TOOLS_COMMANDS_HPP_
