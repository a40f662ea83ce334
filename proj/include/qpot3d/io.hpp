#ifndef QPOT3D_IO_HPP_
#define QPOT3D_IO_HPP_

// On-disk formats:
//   u.grid     raw little-endian float64, i fastest, no header; +inf marks
//              unreached nodes
//   meta.json  grid geometry, equilibrium, quadratic form, config echo
//   stats.json run counters and, when available, error metrics
//   *.csv      RFC 4180 with a header row

#include <bit>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "qpot3d/config.hpp"
#include "qpot3d/postprocess.hpp"
#include "qpot3d/solver.hpp"

namespace qpot3d {

inline constexpr char const* kVersion = "0.1.0";

inline json to_json(Vec3 const& v) { return json::array({v.x, v.y, v.z}); }

inline json to_json(Mat3 const& m) {
  json out = json::array();
  for (auto const& row : m.m) {
    out.push_back(json::array({row[0], row[1], row[2]}));
  }
  return out;
}

inline void write_grid(std::filesystem::path const& path,
                       std::vector<double> const& U) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  std::vector<unsigned char> buf(U.size() * 8);
  for (std::size_t n = 0; n < U.size(); ++n) {
    auto bits = std::bit_cast<std::uint64_t>(U[n]);
    for (int b = 0; b < 8; ++b) {
      buf[n * 8 + static_cast<std::size_t>(b)] =
          static_cast<unsigned char>((bits >> (8 * b)) & 0xffu);
    }
  }
  out.write(reinterpret_cast<char const*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
  if (!out) {
    throw std::runtime_error("failed writing " + path.string());
  }
}

inline std::vector<double> read_grid(std::filesystem::path const& path,
                                     std::size_t count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot read " + path.string());
  }
  std::vector<unsigned char> buf(count * 8);
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(in.gcount()) != buf.size() ||
      in.peek() != std::char_traits<char>::eof()) {
    throw std::runtime_error(path.string() + " does not match the mesh size");
  }
  std::vector<double> U(count);
  for (std::size_t n = 0; n < count; ++n) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(buf[n * 8 + static_cast<std::size_t>(b)])
              << (8 * b);
    }
    U[n] = std::bit_cast<double>(bits);
  }
  return U;
}

inline std::string utc_timestamp() {
  std::time_t const t =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

inline json grid_json(Grid3 const& g) {
  return {{"n", {g.nx(), g.ny(), g.nz()}},
          {"origin", to_json(g.origin())},
          {"steps", to_json(g.steps())},
          {"lo", to_json(g.origin())},
          {"hi", to_json(g.upper())}};
}

inline json meta_json(QuasipotentialField const& f, RunConfig const& cfg) {
  json m;
  m["format"] = {{"file", "u.grid"},
                 {"dtype", "float64"},
                 {"byte_order", "little"},
                 {"ordering", "x_fastest"},
                 {"unreached", "inf"}};
  m["grid"] = grid_json(f.grid);
  m["field"] = {{"id", cfg.field_id}, {"params", cfg.params}};
  m["equilibrium"] = to_json(f.equilibrium);
  m["equilibrium_node"] = f.equilibrium_node;
  m["quadratic_form"] = to_json(f.Q);
  m["solver"] = {{"K", f.config.K},
                 {"factoring", f.config.factoring},
                 {"factoring_radius", f.config.factoring_radius},
                 {"termination", to_string(f.config.termination)}};
  m["config"] = cfg.source;
  m["version"] = kVersion;
  m["created"] = utc_timestamp();
  m["wall_seconds"] = f.stats.wall_seconds;
  return m;
}

inline json metrics_json(ErrorMetrics const& e) {
  return {{"E_max", e.e_max}, {"E_RMS", e.e_rms}, {"E_NM", e.e_nm},
          {"E_NR", e.e_nr},   {"U_max", e.u_max}, {"U_RMS", e.u_rms},
          {"nodes", e.nodes}};
}

/// Counters only; timing lives in meta.json so reruns give identical stats.
inline json stats_json(RunStats const& s) {
  return {{"one_point_attempts", s.one_point_attempts},
          {"one_point_rejections", s.one_point_rejections},
          {"triangle_attempts", s.triangle_attempts},
          {"triangle_sign_rejections", s.triangle_sign_rejections},
          {"triangle_other_rejections", s.triangle_other_rejections},
          {"triangle_sign_rejection_fraction", s.triangle_sign_fraction()},
          {"simplex_attempts", s.simplex_attempts},
          {"simplex_kkt_rejections", s.simplex_kkt_rejections},
          {"simplex_newton_rejections", s.simplex_newton_rejections},
          {"simplex_nonfinite_rejections", s.simplex_nonfinite_rejections},
          {"simplex_kkt_rejection_fraction", s.simplex_kkt_fraction()},
          {"accepted_nodes", s.accepted_nodes},
          {"non_monotone_pops", s.non_monotone_pops},
          {"max_monotonicity_defect", s.max_monotonicity_defect},
          {"boundary_reached", s.boundary_reached}};
}

inline void write_json(std::filesystem::path const& path, json const& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  out << std::setw(2) << j << '\n';
}

/// Writes u.grid and meta.json into dir.
inline void save_field(std::filesystem::path const& dir,
                       QuasipotentialField const& f, RunConfig const& cfg) {
  std::filesystem::create_directories(dir);
  write_grid(dir / "u.grid", f.U);
  write_json(dir / "meta.json", meta_json(f, cfg));
}

/// Reloads a field written by save_field. Finite nodes are marked Accepted.
inline QuasipotentialField load_field(std::filesystem::path const& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in) {
    throw std::runtime_error("cannot read " + (dir / "meta.json").string());
  }
  json const m = json::parse(in);
  json const& g = m.at("grid");
  auto const n = g.at("n").get<std::array<int, 3>>();
  auto const steps = g.at("steps").get<std::array<double, 3>>();
  auto const origin = g.at("origin").get<std::array<double, 3>>();
  Grid3 grid(n[0], n[1], n[2], {steps[0], steps[1], steps[2]},
             {origin[0], origin[1], origin[2]});
  QuasipotentialField f{grid, {}, {}, {}, 0, {}, {}, {}};
  f.U = read_grid(dir / "u.grid", grid.size());
  f.labels.resize(grid.size());
  for (std::size_t i = 0; i < f.U.size(); ++i) {
    f.labels[i] = std::isfinite(f.U[i]) ? Label::Accepted : Label::Unknown;
  }
  auto const e = m.at("equilibrium").get<std::array<double, 3>>();
  f.equilibrium = {e[0], e[1], e[2]};
  f.equilibrium_node = m.at("equilibrium_node").get<std::size_t>();
  auto const q = m.at("quadratic_form").get<std::array<std::array<double, 3>, 3>>();
  f.Q.m = q;
  json const& s = m.at("solver");
  f.config.K = s.at("K").get<int>();
  f.config.factoring = s.at("factoring").get<bool>();
  f.config.factoring_radius = s.at("factoring_radius").get<double>();
  f.config.termination = s.at("termination").get<std::string>() == "exhaust"
                             ? Termination::Exhaust
                             : Termination::BoundaryHit;
  return f;
}

/// Minimal RFC 4180 writer.
class CsvWriter {
 public:
  explicit CsvWriter(std::filesystem::path const& path)
      : out_(path, std::ios::trunc) {
    if (!out_) {
      throw std::runtime_error("cannot write " + path.string());
    }
    out_ << std::setprecision(17);
  }

  template <class... T>
  void row(T const&... cells) {
    bool first = true;
    ((write_cell(cells, first), first = false), ...);
    out_ << "\r\n";
  }

  void row(std::vector<std::string> const& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i > 0) {
        out_ << ',';
      }
      out_ << quote(cells[i]);
    }
    out_ << "\r\n";
  }

  static std::string quote(std::string const& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) {
      return s;
    }
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') {
        q += '"';
      }
      q += c;
    }
    return q + "\"";
  }

 private:
  template <class T>
  void write_cell(T const& v, bool first) {
    if (!first) {
      out_ << ',';
    }
    if constexpr (std::is_floating_point_v<T>) {
      if (std::isnan(v)) {
        out_ << "nan";
      } else if (std::isinf(v)) {
        out_ << (v > 0 ? "inf" : "-inf");
      } else {
        out_ << v;
      }
    } else if constexpr (std::is_convertible_v<T, std::string>) {
      out_ << quote(std::string(v));
    } else {
      out_ << v;
    }
  }

  std::ofstream out_;
};

}  // namespace qpot3d

#endif  // QPOT3D_IO_HPP_
