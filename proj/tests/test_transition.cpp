// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "bmpc/nlp.hpp"
#include "bmpc/reactor.hpp"
#include "bmpc/rng.hpp"
#include "bmpc/transition.hpp"

namespace {

const bmpc::Plant kPlant{};

bmpc::TransitionNlp make(double x0, double x1, double u1, double theta,
                         int n_fe = 10, int n_c = 3) {
  return bmpc::build_transition_nlp(x0, x1, u1, theta,
                                    bmpc::make_grid(n_fe, n_c), kPlant);
}

double solve_cost(double x0, double x1, double u1, double theta) {
  const auto result = bmpc::solve_transition(make(x0, x1, u1, theta));
  REQUIRE(result.converged);
  return result.cost;
}

}  // namespace

TEST_CASE("interior point solves a convex quadratic with bounds") {
  // min (z0+1)^2 + (z1-2)^2  s.t. z0 + z1 = 1, z >= 0
  // optimum z = (0, 1); the lower bound on z0 is strongly active
  bmpc::NlpProblem p;
  p.num_vars = 2;
  p.num_cons = 1;
  p.lower = Eigen::VectorXd::Zero(2);
  p.upper = Eigen::VectorXd::Constant(2, bmpc::kInfBound);
  p.objective = [](const Eigen::VectorXd& z) {
    return (z[0] + 1.0) * (z[0] + 1.0) + (z[1] - 2.0) * (z[1] - 2.0);
  };
  p.gradient = [](const Eigen::VectorXd& z, Eigen::VectorXd& g) {
    g.resize(2);
    g[0] = 2.0 * (z[0] + 1.0);
    g[1] = 2.0 * (z[1] - 2.0);
  };
  p.constraints = [](const Eigen::VectorXd& z, Eigen::VectorXd& c) {
    c.resize(1);
    c[0] = z[0] + z[1] - 1.0;
  };
  p.jacobian = [](const Eigen::VectorXd&, Eigen::MatrixXd& J) {
    J.resize(1, 2);
    J(0, 0) = J(0, 1) = 1.0;
  };
  p.lagrangian_hessian = [](const Eigen::VectorXd&, const Eigen::VectorXd&,
                            Eigen::MatrixXd& W) {
    W = 2.0 * Eigen::MatrixXd::Identity(2, 2);
  };
  const auto result =
      bmpc::solve_interior_point(p, Eigen::VectorXd::Constant(2, 0.4));
  REQUIRE(result.converged);
  CHECK(result.z[0] == Catch::Approx(0.0).margin(1e-7));
  CHECK(result.z[1] == Catch::Approx(1.0).margin(1e-7));
  CHECK(result.objective == Catch::Approx(2.0).margin(1e-6));
}

TEST_CASE("transition nlp counts variables and rows as built") {
  const auto nlp = make(0.24, 0.5, 2500.0, 5.0, 10, 3);
  CHECK(nlp.num_vars() == 10 * 3 * 3 + 10 + 1);
  CHECK(nlp.num_cons() == 2 * 30 + 9 + 4);
  CHECK(nlp.time_at(0, 2) == Catch::Approx(0.5));   // h = 0.5, gamma_3 = 1
  CHECK(nlp.time_at(9, 2) == Catch::Approx(5.0));
}

TEST_CASE("single-element implicit Euler structure") {
  const auto nlp = make(0.3, 0.4, 1000.0, 1.0, 1, 1);
  const auto p = bmpc::detail::make_nlp(nlp);
  // at a point satisfying x = x0 + 1*F(x, u), the collocation row vanishes
  Eigen::VectorXd z(p.num_vars);
  const double x0 = 0.3, u = 1000.0;
  // bisection for the implicit step x = x0 + F(x, u)
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid - x0 - bmpc::reactor_rhs(kPlant, mid, u) < 0.0) lo = mid;
    else hi = mid;
  }
  const double x = 0.5 * (lo + hi);
  z[nlp.ix(0, 0)] = x;
  z[nlp.ixd(0, 0)] = bmpc::reactor_rhs(kPlant, x, u);
  z[nlp.iu(0, 0)] = u / bmpc::kFlowScale;
  z[nlp.ix0(0)] = x0;
  z[nlp.ith()] = 1.0;
  Eigen::VectorXd c(p.num_cons);
  p.constraints(z, c);
  CHECK(std::abs(c[nlp.row_coll(0, 0)]) < 1e-10);
  CHECK(std::abs(c[nlp.row_dyn(0, 0)]) < 1e-10);
}

TEST_CASE("transition nlp derivatives agree with finite differences") {
  const auto nlp = make(0.24, 0.5, 2500.0, 2.0, 3, 3);
  const auto p = bmpc::detail::make_nlp(nlp);
  bmpc::Rng rng(11);
  Eigen::VectorXd z(p.num_vars);
  const auto traj = bmpc::initial_trajectory_linear(nlp);
  z = bmpc::detail::pack_trajectory(nlp, traj);
  for (int i = 0; i < p.num_vars; ++i) z[i] += rng.uniform(-0.01, 0.01);

  Eigen::VectorXd g(p.num_vars);
  p.gradient(z, g);
  Eigen::MatrixXd J(p.num_cons, p.num_vars);
  p.jacobian(z, J);

  const double h = 1e-6;
  for (int i = 0; i < p.num_vars; i += 3) {
    Eigen::VectorXd zp = z, zm = z;
    zp[i] += h;
    zm[i] -= h;
    CHECK(g[i] == Catch::Approx((p.objective(zp) - p.objective(zm)) / (2 * h))
                      .margin(1e-5));
    Eigen::VectorXd cp(p.num_cons), cm(p.num_cons);
    p.constraints(zp, cp);
    p.constraints(zm, cm);
    for (int r = 0; r < p.num_cons; r += 2)
      CHECK(J(r, i) ==
            Catch::Approx((cp[r] - cm[r]) / (2 * h)).margin(1e-5));
  }

  // Lagrangian Hessian against finite differences of the gradient
  Eigen::VectorXd y(p.num_cons);
  for (int r = 0; r < p.num_cons; ++r) y[r] = rng.uniform(-1.0, 1.0);
  Eigen::MatrixXd W(p.num_vars, p.num_vars);
  p.lagrangian_hessian(z, y, W);
  auto lag_grad = [&](const Eigen::VectorXd& zz) {
    Eigen::VectorXd gg(p.num_vars);
    p.gradient(zz, gg);
    Eigen::MatrixXd JJ(p.num_cons, p.num_vars);
    p.jacobian(zz, JJ);
    return Eigen::VectorXd(gg + JJ.transpose() * y);
  };
  for (int i = 0; i < p.num_vars; i += 4) {
    Eigen::VectorXd zp = z, zm = z;
    zp[i] += h;
    zm[i] -= h;
    const Eigen::VectorXd col = (lag_grad(zp) - lag_grad(zm)) / (2 * h);
    for (int r = 0; r < p.num_vars; r += 4)
      CHECK(W(r, i) == Catch::Approx(col[r]).margin(1e-5));
  }
}

TEST_CASE("identity transition costs nothing") {
  const auto result = bmpc::solve_transition(make(0.5, 0.5, 2500.0, 2.0));
  REQUIRE(result.converged);
  CHECK(result.cost == Catch::Approx(0.0).margin(1e-6));
  CHECK(result.multiplier == Catch::Approx(0.0).margin(1e-4));
  for (int f = 0; f < 10; ++f)
    for (int c = 0; c < 3; ++c)
      CHECK(result.trajectory.states(f, c) == Catch::Approx(0.5).margin(1e-6));
}

TEST_CASE("multiplier matches the centered finite difference of the cost") {
  const double theta_min = bmpc::min_transition_time(kPlant, 0.24, 0.5);
  const double theta = 1.5 * theta_min;
  const auto result = bmpc::solve_transition(make(0.24, 0.5, 2500.0, theta));
  REQUIRE(result.converged);
  CHECK(result.cost > 0.0);

  const double h = 1e-4 * theta;
  const double sp = solve_cost(0.24, 0.5, 2500.0, theta + h);
  const double sm = solve_cost(0.24, 0.5, 2500.0, theta - h);
  const double fd = -(sp - sm) / (2.0 * h);
  CHECK(result.multiplier ==
        Catch::Approx(fd).epsilon(0.02));
}

TEST_CASE("cost equals the quadrature of the returned trajectory") {
  const double theta_min = bmpc::min_transition_time(kPlant, 0.2, 0.39);
  const auto nlp = make(0.2, 0.39, 1000.0, 1.7 * theta_min);
  const auto result = bmpc::solve_transition(nlp);
  REQUIRE(result.converged);
  const double quad = bmpc::transition_cost(nlp, result.trajectory);
  CHECK(result.cost ==
        Catch::Approx(quad).margin(1e-10 * (1.0 + std::abs(quad))));
  CHECK(result.cost >= 0.0);
}

TEST_CASE("rk4 re-simulation of the optimal control reproduces the target") {
  const double theta_min = bmpc::min_transition_time(kPlant, 0.24, 0.5);
  const double theta = 1.5 * theta_min;
  const auto nlp = make(0.24, 0.5, 2500.0, theta);
  const auto result = bmpc::solve_transition(nlp);
  REQUIRE(result.converged);

  const auto traj = bmpc::simulate_rk4(
      kPlant, 0.24,
      [&](double time) { return bmpc::control_value(nlp, result.trajectory, time); },
      theta, 2000);
  CHECK(traj.back() == Catch::Approx(0.5).margin(1e-4));
}

TEST_CASE("value function decreases with transition time") {
  const double theta_min = bmpc::min_transition_time(kPlant, 0.3, 0.5);
  double prev = -1.0;
  for (double factor : {1.2, 1.8, 2.6, 3.5}) {
    const double s = solve_cost(0.3, 0.5, 2500.0, factor * theta_min);
    CHECK(s >= 0.0);
    if (prev >= 0.0) CHECK(s < prev);
    prev = s;
  }
}

TEST_CASE("element refinement converges at first order") {
  // The pinned terminal control sits off the free optimal profile, which
  // leaves an O(h) layer in the cost; successive doublings must shrink the
  // change by about half and stay inside the layer budget.
  const double theta_min = bmpc::min_transition_time(kPlant, 0.24, 0.5);
  const double theta = 1.5 * theta_min;
  double costs[3];
  int idx = 0;
  for (int fe : {10, 20, 40}) {
    const auto r = bmpc::solve_transition(make(0.24, 0.5, 2500.0, theta, fe, 3));
    REQUIRE(r.converged);
    costs[idx++] = r.cost;
  }
  const double d1 = std::abs(costs[0] - costs[1]);
  const double d2 = std::abs(costs[1] - costs[2]);
  CHECK(d1 <= 0.025 * std::abs(costs[1]));
  CHECK(d2 <= 0.6 * d1);  // roughly halves per doubling
}

TEST_CASE("theta below the reachable minimum is reported") {
  const double theta_min = bmpc::min_transition_time(kPlant, 0.24, 0.5);
  CHECK_THROWS_AS(bmpc::solve_transition(make(0.24, 0.5, 2500.0, 0.5 * theta_min)),
                  bmpc::InfeasibleTheta);
}
