// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "bmpc/lp.hpp"  // kInfBound / is_finite_bound

namespace bmpc {

// Dense equality-constrained NLP with variable bounds:
//   min f(z)   s.t.  c(z) = 0,  l <= z <= u
struct NlpProblem {
  int num_vars = 0;
  int num_cons = 0;
  Eigen::VectorXd lower, upper;  // kInfBound sentinels for one-sided/free

  std::function<double(const Eigen::VectorXd&)> objective;
  std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)> gradient;
  std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)> constraints;
  std::function<void(const Eigen::VectorXd&, Eigen::MatrixXd&)> jacobian;
  // W = grad^2 f + sum_i y_i grad^2 c_i
  std::function<void(const Eigen::VectorXd&, const Eigen::VectorXd&,
                     Eigen::MatrixXd&)>
      lagrangian_hessian;
};

struct IpmOptions {
  double tol = 1e-8;
  double mu_init = 0.1;
  double mu_min = 1e-11;
  int max_iterations = 400;
};

struct IpmResult {
  bool converged = false;
  Eigen::VectorXd z, y;
  double objective = 0.0;
  double kkt_error = std::numeric_limits<double>::infinity();
  int iterations = 0;
};

// Primal-dual interior-point Newton with a monotone barrier schedule
// (mu <- mu/10 from 0.1), fraction-to-the-boundary stepping and an l1 merit
// line search. The condensed KKT system is factorized densely; indefiniteness
// is handled by progressively regularizing the Hessian block.
class InteriorPointSolver {
 public:
  InteriorPointSolver(const NlpProblem& problem, IpmOptions options = {})
      : p_(problem), opt_(options) {}

  IpmResult solve(const Eigen::VectorXd& z_init) {
    const int n = p_.num_vars, m = p_.num_cons;
    IpmResult result;

    Eigen::VectorXd z = z_init;
    push_interior(z);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd zl = Eigen::VectorXd::Zero(n), zu = Eigen::VectorXd::Zero(n);
    double mu = opt_.mu_init;
    for (int i = 0; i < n; ++i) {
      if (has_lb(i)) zl[i] = mu / (z[i] - p_.lower[i]);
      if (has_ub(i)) zu[i] = mu / (p_.upper[i] - z[i]);
    }

    Eigen::VectorXd grad(n), c(m);
    Eigen::MatrixXd J(m, n), W(n, n);
    Eigen::MatrixXd kkt(n + m, n + m);
    Eigen::VectorXd rhs(n + m);
    double nu = 1.0;        // l1 penalty weight
    double delta_seed = 0.0;  // persistent Hessian regularization hint

    int iter = 0;
    bool stalled = false;
    while (iter < opt_.max_iterations && !stalled) {
      p_.gradient(z, grad);
      p_.constraints(z, c);
      p_.jacobian(z, J);

      if (kkt_error(z, y, zl, zu, grad, c, J, 0.0) <= opt_.tol) break;
      if (kkt_error(z, y, zl, zu, grad, c, J, mu) <= 10.0 * mu &&
          mu > opt_.mu_min) {
        mu = std::max(mu / 10.0, opt_.mu_min);
        continue;
      }
      ++iter;

      p_.lagrangian_hessian(z, y, W);
      Eigen::VectorXd sigma = Eigen::VectorXd::Zero(n);
      Eigen::VectorXd rz = -grad - J.transpose() * y;
      for (int i = 0; i < n; ++i) {
        if (has_lb(i)) {
          const double sl = z[i] - p_.lower[i];
          sigma[i] += zl[i] / sl;
          rz[i] += mu / sl;
        }
        if (has_ub(i)) {
          const double su = p_.upper[i] - z[i];
          sigma[i] += zu[i] / su;
          rz[i] -= mu / su;
        }
      }

      // direction, regularizing until it is usable
      Eigen::VectorXd dz(n), dy(m);
      double delta = delta_seed;
      bool direction_ok = false;
      const double c_norm1 = c.lpNorm<1>();
      for (int attempt = 0; attempt < 10 && !direction_ok; ++attempt) {
        kkt.setZero();
        kkt.topLeftCorner(n, n) = W;
        kkt.topLeftCorner(n, n).diagonal() += sigma;
        if (delta > 0.0) kkt.topLeftCorner(n, n).diagonal().array() += delta;
        kkt.topRightCorner(n, m) = J.transpose();
        kkt.bottomLeftCorner(m, n) = J;
        kkt.bottomRightCorner(m, m).diagonal().array() -= 1e-11;
        rhs.head(n) = rz;
        rhs.tail(m) = -c;
        const Eigen::VectorXd step = kkt.partialPivLu().solve(rhs);
        if (step.allFinite() &&
            (kkt * step - rhs).lpNorm<Eigen::Infinity>() <
                1e-6 * (1.0 + rhs.lpNorm<Eigen::Infinity>())) {
          dz = step.head(n);
          dy = step.tail(m);
          // raise the penalty so dz is a descent direction for the merit
          if (c_norm1 > 1e-14) {
            const double directional = barrier_grad_dot(z, grad, dz, mu);
            nu = std::max(nu, directional / c_norm1 + 1.0);
          }
          if (merit_slope(z, grad, dz, mu, nu, c) < -1e-16 || dz.norm() < 1e-14)
            direction_ok = true;
        }
        if (!direction_ok) delta = delta == 0.0 ? 1e-8 : delta * 100.0;
      }
      if (!direction_ok) break;
      delta_seed = delta > 0.0 ? delta / 100.0 : 0.0;

      // fraction-to-the-boundary limits
      const double tau = std::max(0.99, 1.0 - mu);
      double alpha_max = 1.0, alpha_dual = 1.0;
      Eigen::VectorXd dzl = Eigen::VectorXd::Zero(n),
                      dzu = Eigen::VectorXd::Zero(n);
      for (int i = 0; i < n; ++i) {
        if (has_lb(i)) {
          const double sl = z[i] - p_.lower[i];
          if (dz[i] < 0.0) alpha_max = std::min(alpha_max, -tau * sl / dz[i]);
          dzl[i] = (mu - sl * zl[i]) / sl - zl[i] / sl * dz[i];
          if (dzl[i] < 0.0)
            alpha_dual = std::min(alpha_dual, -tau * zl[i] / dzl[i]);
        }
        if (has_ub(i)) {
          const double su = p_.upper[i] - z[i];
          if (dz[i] > 0.0) alpha_max = std::min(alpha_max, tau * su / dz[i]);
          dzu[i] = (mu - su * zu[i]) / su + zu[i] / su * dz[i];
          if (dzu[i] < 0.0)
            alpha_dual = std::min(alpha_dual, -tau * zu[i] / dzu[i]);
        }
      }

      // backtracking l1 merit line search
      const double phi0 = merit(z, c, mu, nu);
      const double slope = merit_slope(z, grad, dz, mu, nu, c);
      const double err_before = kkt_error(z, y, zl, zu, grad, c, J, mu);
      double alpha = alpha_max;
      bool accepted = false;
      for (int ls = 0; ls < 40; ++ls) {
        const Eigen::VectorXd z_trial = z + alpha * dz;
        Eigen::VectorXd c_trial(m);
        p_.constraints(z_trial, c_trial);
        const double phi_trial = merit(z_trial, c_trial, mu, nu);
        if (std::isfinite(phi_trial) &&
            phi_trial <= phi0 + 1e-4 * alpha * slope) {
          accepted = true;
        } else if (std::isfinite(phi_trial) && ls > 0) {
          // Armijo failed; accept genuine KKT progress instead
          Eigen::VectorXd g_t(n);
          Eigen::MatrixXd J_t(m, n);
          p_.gradient(z_trial, g_t);
          p_.jacobian(z_trial, J_t);
          const Eigen::VectorXd y_t = y + alpha * dy;
          const Eigen::VectorXd zl_t = zl + alpha_dual * dzl;
          const Eigen::VectorXd zu_t = zu + alpha_dual * dzu;
          if (kkt_error(z_trial, y_t, zl_t, zu_t, g_t, c_trial, J_t, mu) <
              0.9 * err_before)
            accepted = true;
        }
        if (accepted) {
          z = z_trial;
          y += alpha * dy;
          zl += alpha_dual * dzl;
          zu += alpha_dual * dzu;
          break;
        }
        alpha *= 0.5;
        if (alpha < 1e-14) break;
      }
      if (!accepted) {
        if (delta_seed < 1e6) delta_seed = std::max(1e-4, delta_seed * 1e4);
        else stalled = true;
        continue;
      }

      // keep bound multipliers compatible with the barrier parameter
      for (int i = 0; i < n; ++i) {
        if (has_lb(i)) {
          const double sl = z[i] - p_.lower[i];
          zl[i] = std::clamp(zl[i], mu / (1e10 * sl), 1e10 * mu / sl);
        }
        if (has_ub(i)) {
          const double su = p_.upper[i] - z[i];
          zu[i] = std::clamp(zu[i], mu / (1e10 * su), 1e10 * mu / su);
        }
      }
    }

    p_.gradient(z, grad);
    p_.constraints(z, c);
    p_.jacobian(z, J);
    result.kkt_error = kkt_error(z, y, zl, zu, grad, c, J, 0.0);
    result.converged = result.kkt_error <= opt_.tol;
    result.z = std::move(z);
    result.y = std::move(y);
    result.objective = p_.objective(result.z);
    result.iterations = iter;
    return result;
  }

 private:
  bool has_lb(int i) const { return is_finite_bound(p_.lower[i]); }
  bool has_ub(int i) const { return is_finite_bound(p_.upper[i]); }

  void push_interior(Eigen::VectorXd& z) const {
    for (int i = 0; i < p_.num_vars; ++i) {
      const double lo = p_.lower[i], hi = p_.upper[i];
      if (has_lb(i) && has_ub(i)) {
        const double pad = std::min(1e-2 * (hi - lo), 1e-2);
        z[i] = std::clamp(z[i], lo + pad, hi - pad);
      } else if (has_lb(i)) {
        z[i] = std::max(z[i], lo + 1e-2 * std::max(1.0, std::abs(lo)));
      } else if (has_ub(i)) {
        z[i] = std::min(z[i], hi - 1e-2 * std::max(1.0, std::abs(hi)));
      }
    }
  }

  // gradient of the barrier objective (without the constraint penalty)
  double barrier_grad_dot(const Eigen::VectorXd& z, const Eigen::VectorXd& grad,
                          const Eigen::VectorXd& dz, double mu) const {
    double dot = grad.dot(dz);
    for (int i = 0; i < p_.num_vars; ++i) {
      if (has_lb(i)) dot -= mu / (z[i] - p_.lower[i]) * dz[i];
      if (has_ub(i)) dot += mu / (p_.upper[i] - z[i]) * dz[i];
    }
    return dot;
  }

  double merit(const Eigen::VectorXd& z, const Eigen::VectorXd& c, double mu,
               double nu) const {
    double phi = p_.objective(z) + nu * c.lpNorm<1>();
    for (int i = 0; i < p_.num_vars; ++i) {
      if (has_lb(i)) {
        const double sl = z[i] - p_.lower[i];
        if (sl <= 0.0) return std::numeric_limits<double>::infinity();
        phi -= mu * std::log(sl);
      }
      if (has_ub(i)) {
        const double su = p_.upper[i] - z[i];
        if (su <= 0.0) return std::numeric_limits<double>::infinity();
        phi -= mu * std::log(su);
      }
    }
    return phi;
  }

  double merit_slope(const Eigen::VectorXd& z, const Eigen::VectorXd& grad,
                     const Eigen::VectorXd& dz, double mu, double nu,
                     const Eigen::VectorXd& c) const {
    return barrier_grad_dot(z, grad, dz, mu) - nu * c.lpNorm<1>();
  }

  double kkt_error(const Eigen::VectorXd& z, const Eigen::VectorXd& y,
                   const Eigen::VectorXd& zl, const Eigen::VectorXd& zu,
                   const Eigen::VectorXd& grad, const Eigen::VectorXd& c,
                   const Eigen::MatrixXd& J, double mu) const {
    const Eigen::VectorXd stat = grad + J.transpose() * y - zl + zu;
    double err = stat.lpNorm<Eigen::Infinity>();
    if (c.size() > 0) err = std::max(err, c.lpNorm<Eigen::Infinity>());
    for (int i = 0; i < p_.num_vars; ++i) {
      if (has_lb(i))
        err = std::max(err, std::abs((z[i] - p_.lower[i]) * zl[i] - mu));
      if (has_ub(i))
        err = std::max(err, std::abs((p_.upper[i] - z[i]) * zu[i] - mu));
    }
    return err;
  }

  const NlpProblem& p_;
  IpmOptions opt_;
};

inline IpmResult solve_interior_point(const NlpProblem& problem,
                                      const Eigen::VectorXd& z_init,
                                      IpmOptions options = {}) {
  InteriorPointSolver solver(problem, options);
  return solver.solve(z_init);
}

}  // namespace bmpc
