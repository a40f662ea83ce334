// qpot3d: quasipotential solver command line.
//
//   qpot3d solve|convergence|trace-map|slice --config <path>
//          [--set key=value ...] [--out <dir>] [--workers n]

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "commands.hpp"

namespace {

struct Options {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
  int workers = 1;
};

qpot3d::RunConfig load(Options const& o) {
  qpot3d::json doc =
      o.config.empty() ? qpot3d::json::object() : qpot3d::read_json_file(o.config);
  for (auto const& s : o.sets) {
    qpot3d::apply_override(doc, s);
  }
  qpot3d::RunConfig c = qpot3d::parse_config(doc);
  if (!o.out.empty()) {
    c.output = o.out;
  }
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quasipotential solver for 3D SDEs"};
  app.require_subcommand(1);
  Options opt;
  auto add_common = [&opt](CLI::App* sub) {
    sub->add_option("--config", opt.config, "JSON run configuration")
        ->check(CLI::ExistingFile);
    sub->add_option("--set", opt.sets, "override a config key (dotted.key=value)");
    sub->add_option("--out", opt.out, "output directory");
    sub->add_option("--workers", opt.workers, "concurrent solves")
        ->check(CLI::PositiveNumber);
  };
  CLI::App* solve = app.add_subcommand("solve", "solve and write u.grid, meta.json, stats.json");
  CLI::App* conv = app.add_subcommand("convergence", "error study over mesh sizes or K");
  CLI::App* trace = app.add_subcommand("trace-map", "trace minimum action paths");
  CLI::App* slice = app.add_subcommand("slice", "write a mesh plane of U");
  for (CLI::App* s : {solve, conv, trace, slice}) {
    add_common(s);
  }

  try {
    app.parse(argc, argv);
  } catch (CLI::ParseError const& e) {
    int const rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    qpot3d::RunConfig const cfg = load(opt);
    if (solve->parsed()) return qpot3d::cli::cmd_solve(cfg);
    if (conv->parsed()) return qpot3d::cli::cmd_convergence(cfg, opt.workers);
    if (trace->parsed()) return qpot3d::cli::cmd_trace_map(cfg);
    if (slice->parsed()) return qpot3d::cli::cmd_slice(cfg);
  } catch (std::invalid_argument const& e) {
    // ConfigError, AlignmentError and malformed values.
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (std::exception const& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
