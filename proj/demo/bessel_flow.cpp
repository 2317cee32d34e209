// Walks through the library on the Bessel cylinder {x = phi omega(psi), p = omega(psi)}
// carried by H = |p| / rho with rho = 1 + x^2 + y^2.

#include <cstdio>
#include <numbers>

#include "glance/glance.hpp"

using namespace glance;
namespace hm = glance::hamiltonians;

int main() {
  const auto H = hm::conformal1(hm::rho_quadratic(2));
  const BesselFlow flow(H, 2, 1.0);

  std::printf("rays from phi = 0.5\n");
  std::printf("%6s %6s %10s %10s %10s %12s\n", "psi", "t", "X1", "X2", "H", "det(P,Pp)");
  for (double psi : {0.0, std::numbers::pi / 3})
    for (double t : {0.0, 0.5, 1.0}) {
      const auto j = flow.jet(0.5, Vec::Constant(1, psi), t);
      std::printf("%6.3f %6.2f %10.6f %10.6f %10.6f %12.8f\n", psi, t, j.X[0], j.X[1], j.E, j.det_P_Ppsi());
    }

  // the flow-out chart is Lagrangian and its eikonal stays equal to phi
  const auto chart = flow_out(bessel_chart(2), H, 1.0);
  std::printf("\nflow-out chart: lagrangian residual %.2e, eikonal residual %.2e\n", lagrangian_residual(chart, 40),
              eikonal_residual(chart, 20));

  // glancing points when rho is centered on a point of the cylinder
  const Eigen::Vector2d x0(0.8, 0.0);
  const auto Hs = hm::conformal1(hm::rho_shifted_half(x0));
  std::printf("\nglancing points for rho = (1 + |x - (0.8, 0)|^2) / 2\n");
  for (const auto& g : glancing_search(Hs, {.phi_min = -1.5, .phi_max = 1.5}))
    std::printf("  phi %7.4f  psi %7.4f  E0 %.6f  %s\n", g.phi, g.psi[0], g.E0, to_string(g.kind).c_str());

  // invariant density of the generating family against det(P, P_psi)
  const auto fam = prop2_family(H, 2, 1.0);
  const auto y = prop2_density_coordinates(2);
  std::printf("\n%6s %12s %12s\n", "t", "F", "det(P,Pp)");
  for (double t : {0.0, 0.4, 0.8}) {
    const auto [th, xt] = prop2_chart_point(flow, 0.5, Vec::Constant(1, 1.0), t);
    std::printf("%6.2f %12.8f %12.8f\n", t, invariant_density(fam, y, th, xt),
                flow.jet(0.5, Vec::Constant(1, 1.0), t).det_P_Ppsi());
  }
  return 0;
}
