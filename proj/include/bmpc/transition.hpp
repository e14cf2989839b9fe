// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "bmpc/collocation.hpp"
#include "bmpc/nlp.hpp"
#include "bmpc/reactor.hpp"

namespace bmpc {

// Internal control scaling: flows are solved in units of kFlowScale L/hr so
// the KKT system stays O(1).
constexpr double kFlowScale = 1000.0;

// Collocation-discretized transition subproblem: steer the reactor from
// x_start to the steady pair (x_target, u_target) in exactly `theta` hours.
// The transition time is carried as a pinned variable so its multiplier is
// available directly.
struct TransitionNlp {
  double x_start = 0.0;   // mol/L
  double x_target = 0.0;  // mol/L
  double u_target = 0.0;  // L/hr
  double theta = 0.0;     // hr, pinned
  CollocationGrid grid;
  Plant plant;
  double alpha_u = 1.0;

  int n_fe() const { return grid.n_fe; }
  int n_c() const { return grid.n_c; }
  int num_vars() const { return 3 * n_fe() * n_c() + n_fe() + 1; }
  int num_cons() const { return 2 * n_fe() * n_c() + (n_fe() - 1) + 4; }

  // variable layout
  int ix(int f, int c) const { return f * n_c() + c; }
  int ixd(int f, int c) const { return n_fe() * n_c() + f * n_c() + c; }
  int iu(int f, int c) const { return 2 * n_fe() * n_c() + f * n_c() + c; }
  int ix0(int f) const { return 3 * n_fe() * n_c() + f; }
  int ith() const { return 3 * n_fe() * n_c() + n_fe(); }

  // constraint layout
  int row_coll(int f, int c) const { return f * n_c() + c; }
  int row_chain(int f) const { return n_fe() * n_c() + (f - 1); }  // f >= 1
  int row_dyn(int f, int c) const {
    return n_fe() * n_c() + (n_fe() - 1) + f * n_c() + c;
  }
  int row_bc_start() const { return 2 * n_fe() * n_c() + n_fe() - 1; }
  int row_bc_xend() const { return row_bc_start() + 1; }
  int row_bc_uend() const { return row_bc_start() + 2; }
  int row_pin() const { return row_bc_start() + 3; }

  double time_at(int f, int c) const {
    return theta / n_fe() * (f + grid.gamma[c]);
  }
};

inline TransitionNlp build_transition_nlp(double x_start, double x_target,
                                          double u_target, double theta,
                                          const CollocationGrid& grid,
                                          const Plant& plant,
                                          double alpha_u = 1.0) {
  if (!(theta > 0.0))
    throw std::invalid_argument("build_transition_nlp: theta must be > 0");
  if (x_start < 0.0 || x_start > plant.feed_conc || x_target < 0.0 ||
      x_target > plant.feed_conc)
    throw std::invalid_argument(
        "build_transition_nlp: states outside [0, c_feed]");
  if (u_target < plant.flow_lo || u_target > plant.flow_hi)
    throw std::invalid_argument(
        "build_transition_nlp: steady flow outside control bounds");
  TransitionNlp nlp;
  nlp.x_start = x_start;
  nlp.x_target = x_target;
  nlp.u_target = u_target;
  nlp.theta = theta;
  nlp.grid = grid;
  nlp.plant = plant;
  nlp.alpha_u = alpha_u;
  return nlp;
}

struct TransitionTrajectory {
  Eigen::MatrixXd states;          // n_fe x n_c, mol/L
  Eigen::MatrixXd derivs;          // n_fe x n_c, mol/(L hr)
  Eigen::MatrixXd controls;        // n_fe x n_c, L/hr
  Eigen::VectorXd element_starts;  // n_fe, mol/L
};

struct TransitionResult {
  double cost = 0.0;        // S, $
  double multiplier = 0.0;  // lambda, $/hr; S(theta+d) ~ S(theta) - lambda d
  TransitionTrajectory trajectory;
  bool converged = false;
  int iterations = 0;
  double kkt_error = 0.0;
};

struct InfeasibleTheta : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SubproblemNotConverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Transition cost, the weighted control-deviation quadrature evaluated on a
// trajectory: alpha_u * sum_{f,c} N_fe^-1 t_{f,c} w_c (u_{f,c} - u_ss)^2.
inline double transition_cost(const TransitionNlp& nlp,
                              const TransitionTrajectory& traj) {
  double acc = 0.0;
  for (int f = 0; f < nlp.n_fe(); ++f)
    for (int c = 0; c < nlp.n_c(); ++c) {
      const double du = traj.controls(f, c) - nlp.u_target;
      acc += nlp.time_at(f, c) * nlp.grid.weight(c) * du * du;
    }
  return nlp.alpha_u * acc / nlp.n_fe();
}

namespace detail {

// flow that holds a concentration steady, clamped into the control range
inline double holding_flow(const Plant& plant, double conc) {
  if (conc >= plant.feed_conc - 1e-12) return plant.flow_hi;
  const double f =
      plant.volume * plant.rate_const * conc * conc * conc /
      (plant.feed_conc - conc);
  return std::clamp(f, plant.flow_lo, plant.flow_hi);
}

inline NlpProblem make_nlp(const TransitionNlp& t) {
  const int F = t.n_fe(), C = t.n_c();
  const int n = t.num_vars(), m = t.num_cons();
  const double u_t = t.u_target / kFlowScale;
  const double u_ref_v = kFlowScale / t.plant.volume;
  const double k = t.plant.rate_const;
  const double cf = t.plant.feed_conc;

  NlpProblem p;
  p.num_vars = n;
  p.num_cons = m;
  p.lower = Eigen::VectorXd::Constant(n, -kInfBound);
  p.upper = Eigen::VectorXd::Constant(n, kInfBound);
  for (int f = 0; f < F; ++f) {
    for (int c = 0; c < C; ++c) {
      p.lower[t.ix(f, c)] = 0.0;
      p.upper[t.ix(f, c)] = cf;
      p.lower[t.iu(f, c)] = t.plant.flow_lo / kFlowScale;
      p.upper[t.iu(f, c)] = t.plant.flow_hi / kFlowScale;
    }
    p.lower[t.ix0(f)] = 0.0;
    p.upper[t.ix0(f)] = cf;
  }

  // objective coefficient per collocation point: alpha_u (f + gamma_c) w_c / F^2
  Eigen::MatrixXd obj_w(F, C);
  for (int f = 0; f < F; ++f)
    for (int c = 0; c < C; ++c)
      obj_w(f, c) = t.alpha_u * (f + t.grid.gamma[c]) * t.grid.weight(c) /
                    (static_cast<double>(F) * F);

  p.objective = [t, obj_w, u_t, F, C](const Eigen::VectorXd& z) {
    double acc = 0.0;
    for (int f = 0; f < F; ++f)
      for (int c = 0; c < C; ++c) {
        const double du = z[t.iu(f, c)] - u_t;
        acc += obj_w(f, c) * du * du;
      }
    return z[t.ith()] * acc;
  };

  p.gradient = [t, obj_w, u_t, F, C](const Eigen::VectorXd& z,
                                     Eigen::VectorXd& g) {
    g.setZero(z.size());
    const double th = z[t.ith()];
    double acc = 0.0;
    for (int f = 0; f < F; ++f)
      for (int c = 0; c < C; ++c) {
        const double du = z[t.iu(f, c)] - u_t;
        g[t.iu(f, c)] = 2.0 * th * obj_w(f, c) * du;
        acc += obj_w(f, c) * du * du;
      }
    g[t.ith()] = acc;
  };

  const Eigen::MatrixXd omega = t.grid.omega;
  p.constraints = [t, omega, u_ref_v, k, cf, F, C](const Eigen::VectorXd& z,
                                                   Eigen::VectorXd& c_out) {
    c_out.setZero(t.num_cons());
    const double h = z[t.ith()] / F;
    for (int f = 0; f < F; ++f)
      for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int mm = 0; mm < C; ++mm) acc += omega(mm, c) * z[t.ixd(f, mm)];
        c_out[t.row_coll(f, c)] = z[t.ix(f, c)] - z[t.ix0(f)] - h * acc;
        const double x = z[t.ix(f, c)];
        c_out[t.row_dyn(f, c)] = z[t.ixd(f, c)] -
                                 u_ref_v * z[t.iu(f, c)] * (cf - x) +
                                 k * x * x * x;
      }
    for (int f = 1; f < F; ++f) {
      double acc = 0.0;
      for (int mm = 0; mm < C; ++mm)
        acc += omega(mm, C - 1) * z[t.ixd(f - 1, mm)];
      c_out[t.row_chain(f)] = z[t.ix0(f)] - z[t.ix0(f - 1)] - h * acc;
    }
    c_out[t.row_bc_start()] = z[t.ix0(0)] - t.x_start;
    c_out[t.row_bc_xend()] = z[t.ix(F - 1, C - 1)] - t.x_target;
    c_out[t.row_bc_uend()] = z[t.iu(F - 1, C - 1)] - t.u_target / kFlowScale;
    c_out[t.row_pin()] = z[t.ith()] - t.theta;
  };

  p.jacobian = [t, omega, u_ref_v, k, cf, F, C](const Eigen::VectorXd& z,
                                                Eigen::MatrixXd& J) {
    J.setZero(t.num_cons(), t.num_vars());
    const double h = z[t.ith()] / F;
    for (int f = 0; f < F; ++f)
      for (int c = 0; c < C; ++c) {
        const int rc = t.row_coll(f, c);
        J(rc, t.ix(f, c)) = 1.0;
        J(rc, t.ix0(f)) = -1.0;
        double acc = 0.0;
        for (int mm = 0; mm < C; ++mm) {
          J(rc, t.ixd(f, mm)) = -h * omega(mm, c);
          acc += omega(mm, c) * z[t.ixd(f, mm)];
        }
        J(rc, t.ith()) = -acc / F;

        const int rd = t.row_dyn(f, c);
        const double x = z[t.ix(f, c)];
        J(rd, t.ixd(f, c)) = 1.0;
        J(rd, t.ix(f, c)) = u_ref_v * z[t.iu(f, c)] + 3.0 * k * x * x;
        J(rd, t.iu(f, c)) = -u_ref_v * (cf - x);
      }
    for (int f = 1; f < F; ++f) {
      const int r = t.row_chain(f);
      J(r, t.ix0(f)) = 1.0;
      J(r, t.ix0(f - 1)) = -1.0;
      double acc = 0.0;
      for (int mm = 0; mm < C; ++mm) {
        J(r, t.ixd(f - 1, mm)) = -h * omega(mm, C - 1);
        acc += omega(mm, C - 1) * z[t.ixd(f - 1, mm)];
      }
      J(r, t.ith()) = -acc / F;
    }
    J(t.row_bc_start(), t.ix0(0)) = 1.0;
    J(t.row_bc_xend(), t.ix(F - 1, C - 1)) = 1.0;
    J(t.row_bc_uend(), t.iu(F - 1, C - 1)) = 1.0;
    J(t.row_pin(), t.ith()) = 1.0;
  };

  p.lagrangian_hessian = [t, obj_w, omega, u_ref_v, k, u_t, F, C](
                             const Eigen::VectorXd& z, const Eigen::VectorXd& y,
                             Eigen::MatrixXd& W) {
    W.setZero(t.num_vars(), t.num_vars());
    const double th = z[t.ith()];
    const int ith = t.ith();
    for (int f = 0; f < F; ++f)
      for (int c = 0; c < C; ++c) {
        const int ju = t.iu(f, c);
        const double du = z[ju] - u_t;
        W(ju, ju) += 2.0 * th * obj_w(f, c);
        W(ju, ith) += 2.0 * obj_w(f, c) * du;
        W(ith, ju) += 2.0 * obj_w(f, c) * du;

        // collocation rows couple theta with the derivatives
        const double yc = y[t.row_coll(f, c)];
        for (int mm = 0; mm < C; ++mm) {
          const int jd = t.ixd(f, mm);
          W(jd, ith) += -yc * omega(mm, c) / F;
          W(ith, jd) += -yc * omega(mm, c) / F;
        }

        // dynamics rows: curvature of the reaction term and the bilinear u*x
        const double yd = y[t.row_dyn(f, c)];
        const int jx = t.ix(f, c);
        W(jx, jx) += yd * 6.0 * k * z[jx];
        W(jx, ju) += yd * u_ref_v;
        W(ju, jx) += yd * u_ref_v;
      }
    for (int f = 1; f < F; ++f) {
      const double ych = y[t.row_chain(f)];
      for (int mm = 0; mm < C; ++mm) {
        const int jd = t.ixd(f - 1, mm);
        W(jd, ith) += -ych * omega(mm, C - 1) / F;
        W(ith, jd) += -ych * omega(mm, C - 1) / F;
      }
    }
  };

  return p;
}

inline Eigen::VectorXd pack_trajectory(const TransitionNlp& t,
                                       const TransitionTrajectory& traj) {
  Eigen::VectorXd z(t.num_vars());
  for (int f = 0; f < t.n_fe(); ++f) {
    for (int c = 0; c < t.n_c(); ++c) {
      z[t.ix(f, c)] = traj.states(f, c);
      z[t.ixd(f, c)] = traj.derivs(f, c);
      z[t.iu(f, c)] = traj.controls(f, c) / kFlowScale;
    }
    z[t.ix0(f)] = traj.element_starts[f];
  }
  z[t.ith()] = t.theta;
  return z;
}

inline TransitionTrajectory unpack_trajectory(const TransitionNlp& t,
                                              const Eigen::VectorXd& z) {
  TransitionTrajectory traj;
  traj.states.resize(t.n_fe(), t.n_c());
  traj.derivs.resize(t.n_fe(), t.n_c());
  traj.controls.resize(t.n_fe(), t.n_c());
  traj.element_starts.resize(t.n_fe());
  for (int f = 0; f < t.n_fe(); ++f) {
    for (int c = 0; c < t.n_c(); ++c) {
      traj.states(f, c) = z[t.ix(f, c)];
      traj.derivs(f, c) = z[t.ixd(f, c)];
      traj.controls(f, c) = z[t.iu(f, c)] * kFlowScale;
    }
    traj.element_starts[f] = z[t.ix0(f)];
  }
  return traj;
}

}  // namespace detail

// Piecewise-polynomial control: Lagrange interpolation through the
// collocation nodes of the containing element.
inline double control_value(const TransitionNlp& t,
                            const TransitionTrajectory& traj, double time) {
  const int F = t.n_fe(), C = t.n_c();
  const double h = t.theta / F;
  int f = std::clamp(static_cast<int>(time / h), 0, F - 1);
  const double s = time / h - f;
  double u = 0.0;
  for (int c = 0; c < C; ++c) {
    double basis = 1.0;
    for (int j = 0; j < C; ++j) {
      if (j == c) continue;
      basis *= (s - t.grid.gamma[j]) / (t.grid.gamma[c] - t.grid.gamma[j]);
    }
    u += traj.controls(f, c) * basis;
  }
  return u;
}

// Default start: states interpolate x_start -> x_target along the
// collocation clock, controls interpolate between the holding flows.
inline TransitionTrajectory initial_trajectory_linear(const TransitionNlp& t) {
  TransitionTrajectory traj;
  const int F = t.n_fe(), C = t.n_c();
  traj.states.resize(F, C);
  traj.derivs.resize(F, C);
  traj.controls.resize(F, C);
  traj.element_starts.resize(F);
  const double u0 = detail::holding_flow(t.plant, t.x_start);
  for (int f = 0; f < F; ++f) {
    traj.element_starts[f] =
        t.x_start + (t.x_target - t.x_start) * (static_cast<double>(f) / F);
    for (int c = 0; c < C; ++c) {
      const double s = (f + t.grid.gamma[c]) / F;
      const double x = t.x_start + (t.x_target - t.x_start) * s;
      const double u = u0 + (t.u_target - u0) * s;
      traj.states(f, c) = x;
      traj.controls(f, c) = u;
      traj.derivs(f, c) = reactor_rhs(t.plant, x, u);
    }
  }
  return traj;
}

// Fallback start: saturated flow toward the target, then hold. Mirrors the
// minimum-time trajectory shape that tight transition times approach.
inline TransitionTrajectory initial_trajectory_saturated(const TransitionNlp& t) {
  TransitionTrajectory traj;
  const int F = t.n_fe(), C = t.n_c();
  traj.states.resize(F, C);
  traj.derivs.resize(F, C);
  traj.controls.resize(F, C);
  traj.element_starts.resize(F);
  const bool rising = t.x_target > t.x_start;
  const double u_sat =
      t.x_target == t.x_start ? t.u_target
                              : (rising ? t.plant.flow_hi : t.plant.flow_lo);

  const int steps = 512;
  const double h = t.theta / steps;
  std::vector<double> xs(steps + 1);
  std::vector<double> us(steps + 1);
  double x = t.x_start;
  bool holding = false;
  for (int i = 0; i <= steps; ++i) {
    xs[i] = x;
    us[i] = holding ? t.u_target : u_sat;
    if (i == steps) break;
    if (!holding) {
      const double nx = detail::rk4_step(t.plant, x, i * h, h,
                                         [&](double) { return u_sat; });
      if ((nx - t.x_target > 0.0) == rising || nx == t.x_target) {
        holding = true;
        x = t.x_target;
      } else {
        x = nx;
      }
    }
  }

  auto sample = [&](double time, const std::vector<double>& arr) {
    const double pos = std::clamp(time / h, 0.0, static_cast<double>(steps));
    const int i = std::min(static_cast<int>(pos), steps - 1);
    const double w = pos - i;
    return arr[i] * (1.0 - w) + arr[i + 1] * w;
  };

  for (int f = 0; f < F; ++f) {
    traj.element_starts[f] = sample(t.theta * f / F, xs);
    for (int c = 0; c < C; ++c) {
      const double time = t.time_at(f, c);
      traj.states(f, c) = sample(time, xs);
      traj.controls(f, c) = sample(time, us);
      traj.derivs(f, c) =
          reactor_rhs(t.plant, traj.states(f, c), traj.controls(f, c));
    }
  }
  return traj;
}

// Solves the transition subproblem. Retries from the saturated-control
// trajectory when the default start does not converge; a transition time
// below the reachable minimum is reported as InfeasibleTheta.
inline TransitionResult solve_transition(
    const TransitionNlp& nlp, const TransitionTrajectory* init = nullptr,
    IpmOptions opts = {}) {
  const NlpProblem p = detail::make_nlp(nlp);
  opts.tol = 1e-8;

  IpmResult best;
  const TransitionTrajectory first =
      init ? *init : initial_trajectory_linear(nlp);
  best = solve_interior_point(p, detail::pack_trajectory(nlp, first), opts);
  if (!best.converged) {
    const TransitionTrajectory fallback = initial_trajectory_saturated(nlp);
    IpmResult second =
        solve_interior_point(p, detail::pack_trajectory(nlp, fallback), opts);
    if (second.converged ||
        (!best.converged && second.kkt_error < best.kkt_error))
      best = std::move(second);
  }

  if (!best.converged) {
    if (nlp.x_start != nlp.x_target) {
      try {
        const double theta_min =
            min_transition_time(nlp.plant, nlp.x_start, nlp.x_target);
        if (nlp.theta < theta_min - 1e-9)
          throw InfeasibleTheta(
              "solve_transition: theta below the reachable minimum");
      } catch (const UnreachableTarget&) {
        throw InfeasibleTheta("solve_transition: target unreachable");
      }
    }
  }

  TransitionResult result;
  result.converged = best.converged;
  result.iterations = best.iterations;
  result.kkt_error = best.kkt_error;
  result.trajectory = detail::unpack_trajectory(nlp, best.z);
  result.cost = transition_cost(nlp, result.trajectory);
  result.multiplier =
      kFlowScale * kFlowScale * best.y[nlp.row_pin()];
  return result;
}

// Smallest transition time the discretized subproblem accepts. The pinned
// terminal control bends the last element away from saturation, so the
// collocation problem turns feasible only a little above the continuous
// bang-bang minimum; this bisects on solver success above it.
inline double min_feasible_theta(const Plant& plant,
                                 const CollocationGrid& grid, double alpha_u,
                                 double from_conc, double to_conc,
                                 double to_flow, double theta_cont) {
  if (from_conc == to_conc || theta_cont <= 0.0) return theta_cont;
  IpmOptions probe;
  probe.max_iterations = 80;
  auto feasible_at = [&](double theta) {
    const TransitionNlp nlp = build_transition_nlp(
        from_conc, to_conc, to_flow, theta, grid, plant, alpha_u);
    try {
      return solve_transition(nlp, nullptr, probe).converged;
    } catch (const InfeasibleTheta&) {
      return false;
    }
  };
  if (feasible_at(theta_cont)) return theta_cont;
  double lo = theta_cont, hi = 1.2 * theta_cont;
  int guard = 0;
  while (!feasible_at(hi)) {
    lo = hi;
    hi *= 1.2;
    if (++guard > 10)
      throw InfeasibleTheta(
          "min_feasible_theta: no feasible transition time found");
  }
  for (int it = 0; it < 7; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (feasible_at(mid)) hi = mid;
    else lo = mid;
  }
  return hi * 1.002;
}

}  // namespace bmpc
