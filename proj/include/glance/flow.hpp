#pragma once

#include <cmath>
#include <string>

#include "glance/errors.hpp"
#include "glance/integrator.hpp"
#include "glance/phase_space.hpp"
#include "glance/symplectic.hpp"

namespace glance {

/// Right-hand side of Hamilton's equations on the stacked state (x, p).
/// With `with_action` the state carries one extra slot A, dA/dt = <p, dH/dp>,
/// so that A(t) is the integral of p dx along the trajectory.
inline OdeRhs hamilton_rhs(const Hamiltonian& h, bool with_action = false) {
  return [h, with_action](double, const Vec& y, Vec& dy) {
    const auto n = with_action ? (y.size() - 1) / 2 : y.size() / 2;
    const Vec x = y.head(n), p = y.segment(n, n);
    const Vec gp = h.grad_p(x, p);
    dy.resize(y.size());
    dy.head(n) = gp;
    dy.segment(n, n) = -h.grad_x(x, p);
    if (with_action) dy[2 * n] = p.dot(gp);
  };
}

/// Adaptive trajectory with dense output; the state is (x, p) stacked.
inline DenseTrajectory flow_trajectory(const Hamiltonian& h, const PhasePoint& z0, double t, double tol = 1e-10) {
  if (!z0.finite()) throw DomainError("flow: non-finite initial point " + z0.str());
  IntegrationOptions opt;
  opt.rtol = tol;
  opt.atol = tol;
  return integrate_adaptive(hamilton_rhs(h), 0.0, z0.stacked(), t, opt);
}

/// g^t(z0) for the Hamilton vector field of h. flow(h, z, 0) returns z unchanged.
inline PhasePoint flow(const Hamiltonian& h, const PhasePoint& z0, double t, double tol = 1e-10) {
  if (t == 0.0) return z0;
  return PhasePoint::from_stacked(flow_trajectory(h, z0, t, tol).final_state());
}

struct FlowState {
  PhasePoint z;
  double action = 0.0;  // integral of p dx along the trajectory
};

/// Flow state together with transported tangent vectors (columns of V,
/// stacked (dx, dp)), obtained from the variational equations
///   dx' = H_px dx + H_pp dp,   dp' = -H_xx dx - H_xp dp.
struct FlowJet {
  PhasePoint z;
  double action = 0.0;
  Mat V;
};

/// Fixed-step flow map for times |t| <= t_max. The number of steps is fixed at
/// construction, so (z0, t) -> g^t(z0) is smooth and can be differenced.
class FlowMap {
 public:
  FlowMap() = default;
  FlowMap(Hamiltonian h, double t_max, double max_step = 2.5e-3)
      : h_(std::move(h)), t_max_(std::abs(t_max)), steps_(std::max(4, static_cast<int>(std::ceil(t_max_ / max_step)))) {
    rhs_ = hamilton_rhs(h_, true);
  }

  const Hamiltonian& hamiltonian() const { return h_; }
  double t_max() const { return t_max_; }
  int steps() const { return steps_; }

  FlowState operator()(const PhasePoint& z0, double t) const {
    check_time(t);
    const int n = z0.dim();
    Vec y(2 * n + 1);
    y << z0.x, z0.p, 0.0;
    if (t != 0.0) y = integrate_fixed(rhs_, 0.0, y, t, steps_);
    return {PhasePoint(y.head(n), y.segment(n, n)), y[2 * n]};
  }

  /// Flow of z0 together with the tangent vectors V0 (2n x k).
  FlowJet with_tangents(const PhasePoint& z0, const Mat& V0, double t) const {
    check_time(t);
    const int n = z0.dim();
    const auto k = V0.cols();
    if (V0.rows() != 2 * n) throw DomainError("FlowMap: tangent block must have 2n rows");
    Vec y(2 * n + 1 + 2 * n * k);
    y.head(2 * n) = z0.stacked();
    y[2 * n] = 0.0;
    y.tail(2 * n * k) = Eigen::Map<const Vec>(V0.data(), 2 * n * k);
    const Hamiltonian h = h_;
    OdeRhs rhs = [h, n, k](double, const Vec& s, Vec& ds) {
      const Vec x = s.head(n), p = s.segment(n, n);
      const Vec gp = h.grad_p(x, p);
      ds.resize(s.size());
      ds.head(n) = gp;
      ds.segment(n, n) = -h.grad_x(x, p);
      ds[2 * n] = p.dot(gp);
      const HessianBlocks hb = h.hessian(x, p);
      Eigen::Map<const Mat> V(s.data() + 2 * n + 1, 2 * n, k);
      Eigen::Map<Mat> dV(ds.data() + 2 * n + 1, 2 * n, k);
      dV.topRows(n) = hb.xp.transpose() * V.topRows(n) + hb.pp * V.bottomRows(n);
      dV.bottomRows(n) = -hb.xx * V.topRows(n) - hb.xp * V.bottomRows(n);
    };
    if (t != 0.0) y = integrate_fixed(rhs, 0.0, y, t, steps_);
    FlowJet j;
    j.z = PhasePoint(y.head(n), y.segment(n, n));
    j.action = y[2 * n];
    j.V = Eigen::Map<const Mat>(y.data() + 2 * n + 1, 2 * n, k);
    return j;
  }

 private:
  void check_time(double t) const {
    // a small margin lets finite differences straddle the ends of the range
    if (std::abs(t) > t_max_ * (1 + 1e-3) + 1e-3)
      throw DomainError("FlowMap: |t| = " + std::to_string(t) + " exceeds t_max = " + std::to_string(t_max_));
  }

  Hamiltonian h_;
  OdeRhs rhs_;
  double t_max_ = 0.0;
  int steps_ = 4;
};

}  // namespace glance
