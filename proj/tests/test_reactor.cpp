// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "bmpc/reactor.hpp"

namespace {
const bmpc::Plant kPlant{};  // V=5000, k=2, c_feed=1, flow in [0, 3500]
}

TEST_CASE("steady state at F=2500 is exactly 0.5") {
  // 0.5 * (1 - 0.5) = 0.25 = 2 * 0.5^3
  const double c = bmpc::steady_state_concentration(kPlant, 2500.0);
  CHECK(c == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("steady state at F=0 is 0") {
  CHECK(bmpc::steady_state_concentration(kPlant, 0.0) == 0.0);
}

TEST_CASE("steady state at F=200 solves the cubic") {
  const double c = bmpc::steady_state_concentration(kPlant, 200.0);
  const double residual =
      200.0 / 5000.0 * (1.0 - c) - 2.0 * c * c * c;
  CHECK(std::abs(residual) <= 1e-12);
  CHECK(c == Catch::Approx(0.248).margin(5e-3));
}

TEST_CASE("rk4 holds a steady state") {
  auto traj = bmpc::simulate_rk4(kPlant, 0.5, [](double) { return 2500.0; },
                                 2.0, 500);
  for (double x : traj) CHECK(x == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("rk4 matches the closed-form zero-feed decay") {
  // dc/dt = -2 c^3  =>  c(t) = (c0^-2 + 4 t)^-1/2
  auto traj = bmpc::simulate_rk4(kPlant, 0.5, [](double) { return 0.0; },
                                 1.0, 2000);
  const double exact = 1.0 / std::sqrt(4.0 + 4.0);
  CHECK(traj.back() == Catch::Approx(exact).margin(1e-8));
  CHECK(traj.back() == Catch::Approx(0.35355).margin(1e-5));
}

TEST_CASE("rk4 converges at fourth order") {
  auto flow = [](double t) { return 1000.0 + 500.0 * std::sin(t); };
  const double f1 = bmpc::simulate_rk4(kPlant, 0.3, flow, 2.0, 50).back();
  const double f2 = bmpc::simulate_rk4(kPlant, 0.3, flow, 2.0, 100).back();
  const double f4 = bmpc::simulate_rk4(kPlant, 0.3, flow, 2.0, 200).back();
  const double e1 = std::abs(f1 - f2);
  const double e2 = std::abs(f2 - f4);
  // halving the step cuts the error by about 16x
  CHECK(e1 / e2 == Catch::Approx(16.0).epsilon(0.35));
}

TEST_CASE("minimum transition time of the identity move is zero") {
  CHECK(bmpc::min_transition_time(kPlant, 0.24, 0.24) == 0.0);
}

TEST_CASE("minimum transition time matches an rk4 crossing scan") {
  const double theta = bmpc::min_transition_time(kPlant, 0.24, 0.5);
  // oracle: fixed-step RK4 at saturated flow, step halving until stable
  double prev = 0.0;
  for (int steps : {4000, 8000, 16000}) {
    auto traj = bmpc::simulate_rk4(kPlant, 0.24,
                                   [](double) { return 3500.0; },
                                   2.0 * theta, steps);
    const double h = 2.0 * theta / steps;
    double crossing = -1.0;
    for (std::size_t i = 1; i < traj.size(); ++i)
      if (traj[i] >= 0.5) {
        const double f =
            (0.5 - traj[i - 1]) / (traj[i] - traj[i - 1]);
        crossing = h * (static_cast<double>(i - 1) + f);
        break;
      }
    REQUIRE(crossing > 0.0);
    if (prev > 0.0) CHECK(std::abs(crossing - prev) < 1e-6);
    prev = crossing;
  }
  CHECK(theta == Catch::Approx(prev).margin(1e-5));
}

TEST_CASE("targets beyond the saturated steady state are unreachable") {
  const double limit = bmpc::steady_state_concentration(kPlant, 3500.0);
  CHECK_THROWS_AS(bmpc::min_transition_time(kPlant, 0.24, limit + 0.01),
                  bmpc::UnreachableTarget);
}

TEST_CASE("transitions to lower concentrations drain at zero feed") {
  const double theta = bmpc::min_transition_time(kPlant, 0.5, 0.3);
  // dc/dt = -2c^3 from 0.5 down to 0.3: t = (c_end^-2 - c_start^-2)/4
  const double exact = (1.0 / (0.3 * 0.3) - 1.0 / (0.5 * 0.5)) / 4.0;
  CHECK(theta == Catch::Approx(exact).margin(1e-6));
}
