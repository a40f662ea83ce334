// Double-well example: quasipotential barrier at the saddle, the minimum
// action path into it, and an escape-time estimate for a few noise levels.
//
//   double_well_escape [N] [rho]

#include <cstdio>
#include <cstdlib>
#include <exception>

#include "qpot3d/postprocess.hpp"

int main(int argc, char** argv) {
  using namespace qpot3d;
  int const N = argc > 1 ? std::atoi(argv[1]) : 65;
  double const rho = argc > 2 ? std::atof(argv[2]) : 1.0;
  try {
    FieldCatalogEntry const* e = find_catalog_entry("example4");
    VectorField const field = builtin_field("example4", {{"rho", rho}});
    Grid3 const grid = Grid3::from_box(e->domain_lo, e->domain_hi, N, N, N);
    SolverConfig cfg;
    cfg.K = N >= 129 ? 8 : N >= 65 ? 6 : 4;
    cfg.termination = Termination::Exhaust;
    QuasipotentialField const U = solve(grid, field, e->equilibrium, cfg);

    Vec3 const saddle{0, 0, 0};
    TraceResult const map = trace_map(U, field, saddle);
    double const action = geometric_action_along(field, map.path, 0.0);
    std::printf("N=%d rho=%g: U(saddle) = %.5f (exact 1), action along MAP = %.5f\n",
                N, rho, interpolate(U, saddle), action);
    std::printf("MAP: %zu points, stop: %s\n", map.path.size(), to_string(map.stop));
    for (double eps : {0.1, 0.05, 0.025}) {
      EscapeTimeEstimate const t = br_prefactor(U, field, saddle, map.path, eps);
      std::printf("eps=%-6g log E[tau] = %.4f\n", eps, t.log_time);
    }
  } catch (std::exception const& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 1;
  }
  return 0;
}
