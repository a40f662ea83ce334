#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "qpot3d/config.hpp"

namespace fs = std::filesystem;

namespace {

fs::path scratch(std::string const& name) {
  fs::path const p = fs::temp_directory_path() / ("qpot3d_test_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run(std::string const& args) {
  std::string const cmd = std::string(QPOT3D_BIN) + " " + args + " >/dev/null 2>&1";
  int const status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(fs::path const& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path write_config(fs::path const& dir, std::string const& text) {
  fs::path const p = dir / "config.json";
  std::ofstream(p) << text;
  return p;
}

std::vector<std::vector<std::string>> read_csv(fs::path const& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST(Cli, SolveWritesOutputsAndIsDeterministic) {
  fs::path const dir = scratch("solve");
  fs::path const cfg = write_config(dir, R"({"field": "example1", "mesh": 17})");
  ASSERT_EQ(run("solve --config " + cfg.string() + " --out " + (dir / "a").string()), 0);
  ASSERT_EQ(run("solve --config " + cfg.string() + " --out " + (dir / "b").string()), 0);
  for (char const* f : {"u.grid", "meta.json", "stats.json"}) {
    EXPECT_TRUE(fs::exists(dir / "a" / f)) << f;
  }
  EXPECT_EQ(fs::file_size(dir / "a" / "u.grid"), 17u * 17u * 17u * 8u);
  EXPECT_EQ(slurp(dir / "a" / "u.grid"), slurp(dir / "b" / "u.grid"));
  EXPECT_EQ(slurp(dir / "a" / "stats.json"), slurp(dir / "b" / "stats.json"));
  qpot3d::json const stats = qpot3d::json::parse(slurp(dir / "a" / "stats.json"));
  EXPECT_TRUE(stats.contains("errors"));
}

TEST(Cli, ConfigErrorsExitWithTwo) {
  fs::path const dir = scratch("errors");
  EXPECT_EQ(run("solve --set K=0 --set mesh=17 --out " + dir.string()), 2);
  EXPECT_EQ(run("solve --set bogus=1 --out " + dir.string()), 2);
  EXPECT_EQ(run("solve --set field=nope --out " + dir.string()), 2);
  EXPECT_EQ(run("solve --config " + (dir / "missing.json").string()), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run(""), 2);
  fs::path const cfg = write_config(dir, "{ not json");
  EXPECT_EQ(run("solve --config " + cfg.string()), 2);
  EXPECT_FALSE(fs::exists(dir / "u.grid"));
}

TEST(Cli, EmptyTraceMapWritesNothing) {
  fs::path const dir = scratch("trace_empty");
  EXPECT_EQ(run("trace-map --set mesh=17 --out " + dir.string()), 0);
  EXPECT_TRUE(fs::is_empty(dir));
}

TEST(Cli, TraceMapReachesTheAttractor) {
  fs::path const dir = scratch("trace");
  fs::path const cfg = write_config(
      dir, R"({"field": "example4", "mesh": 33, "termination": "exhaust",
               "map_starts": [[-0.05, 0.0, 0.0], [5.0, 0.0, 0.0]]})");
  ASSERT_EQ(run("trace-map --config " + cfg.string() + " --out " + dir.string()), 0);
  auto const rows = read_csv(dir / "map_0.csv");
  ASSERT_GE(rows.size(), 3u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"x", "y", "z", "U_interpolated", "arclength"}));
  // First data row is the attractor end.
  double const h = 2.0 / 32.0;
  double const dx = std::stod(rows[1][0]) + 1.0;
  double const dy = std::stod(rows[1][1]);
  double const dz = std::stod(rows[1][2]);
  EXPECT_LE(std::sqrt(dx * dx + dy * dy + dz * dz), h);
  EXPECT_EQ(std::stod(rows[1][4]), 0.0);
  auto const summary = read_csv(dir / "maps.csv");
  ASSERT_EQ(summary.size(), 3u);
  EXPECT_EQ(summary[1][4], "ok");
  EXPECT_EQ(summary[2][4], "error");
  EXPECT_FALSE(fs::exists(dir / "map_1.csv"));
}

TEST(Cli, SliceThroughTheEquilibrium) {
  fs::path const dir = scratch("slice");
  ASSERT_EQ(run("slice --set mesh=17 --set slice.axis=x --set slice.coordinate=0 --out " +
                dir.string()),
            0);
  auto const rows = read_csv(dir / "slice.csv");
  ASSERT_GT(rows.size(), 1u);
  double lo = 1e300;
  std::size_t at = 0;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    EXPECT_EQ(rows[r][0], "x");
    EXPECT_EQ(rows[r][1], "8");
    if (rows[r][9] != "inf" && std::stod(rows[r][9]) < lo) {
      lo = std::stod(rows[r][9]);
      at = r;
    }
  }
  EXPECT_EQ(lo, 0.0);
  EXPECT_EQ(rows[at][3], "8");
  EXPECT_EQ(rows[at][4], "8");
  EXPECT_EQ(rows[at][5], "8");
  EXPECT_EQ(run("slice --set mesh=17 --set slice.coordinate=4 --out " + dir.string()), 2);
}

TEST(Cli, ConvergenceCsvHasSolveAndFitRows) {
  fs::path const dir = scratch("conv");
  ASSERT_EQ(run("convergence --set convergence.N=[9,17] --set convergence.K=[2,3] "
                "--workers 2 --out " +
                dir.string()),
            0);
  auto const rows = read_csv(dir / "convergence.csv");
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0][0], "kind");
  EXPECT_EQ(rows[1][0], "solve");
  EXPECT_EQ(rows[1][1], "9");
  EXPECT_EQ(rows[2][1], "17");
  EXPECT_EQ(rows[3][0], "fit");
  EXPECT_EQ(rows[3][7], "E_NM");
  EXPECT_EQ(run("convergence --set convergence.N=[16] --out " + dir.string()), 2);
}
