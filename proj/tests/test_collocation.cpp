// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "bmpc/collocation.hpp"

namespace {

double legendre(int n, double t) {
  double p0 = 1.0, p1 = t;
  if (n == 0) return p0;
  for (int k = 1; k < n; ++k) {
    const double p2 = ((2.0 * k + 1.0) * t * p1 - k * p0) / (k + 1.0);
    p0 = p1;
    p1 = p2;
  }
  return p1;
}

// Right-Radau polynomial on [0,1]: P_{n-1}(2x-1) - P_n(2x-1). Its roots are
// the abscissae, with x = 1 always included.
double radau_poly(int n, double x) {
  const double t = 2.0 * x - 1.0;
  return legendre(n - 1, t) - legendre(n, t);
}

// Independent root finder: scan for sign changes, then bisect.
std::vector<double> radau_roots_oracle(int n) {
  std::vector<double> roots;
  const int grid = 20000;
  double prev = radau_poly(n, 0.0);
  for (int i = 1; i <= grid; ++i) {
    const double x = static_cast<double>(i) / grid;
    const double cur = radau_poly(n, x);
    if ((prev < 0.0) != (cur < 0.0) || cur == 0.0) {
      double lo = static_cast<double>(i - 1) / grid, hi = x;
      for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        if ((radau_poly(n, mid) < 0.0) == (prev < 0.0)) lo = mid;
        else hi = mid;
      }
      roots.push_back(0.5 * (lo + hi));
      prev = radau_poly(n, x + 1e-12);
    }
    prev = cur;
  }
  return roots;
}

}  // namespace

TEST_CASE("radau order 1 is implicit Euler") {
  auto [gamma, omega] = bmpc::radau_points(1);
  REQUIRE(gamma.size() == 1);
  CHECK(gamma[0] == 1.0);
  CHECK(omega(0, 0) == Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("radau abscissae match the polynomial roots") {
  for (int n : {2, 3}) {
    auto [gamma, omega] = bmpc::radau_points(n);
    const std::vector<double> roots = radau_roots_oracle(n);
    REQUIRE(roots.size() == static_cast<std::size_t>(n));
    for (int c = 0; c < n; ++c)
      CHECK(gamma[c] == Catch::Approx(roots[c]).margin(1e-10));
    CHECK(gamma[n - 1] == 1.0);
    // quadrature weights (last omega column) sum to 1
    double wsum = 0.0;
    for (int c = 0; c < n; ++c) wsum += omega(c, n - 1);
    CHECK(wsum == Catch::Approx(1.0).margin(1e-13));
  }
}

TEST_CASE("radau order 3 known values") {
  auto [gamma, omega] = bmpc::radau_points(3);
  CHECK(gamma[0] == Catch::Approx(0.15505102572168219).margin(1e-12));
  CHECK(gamma[1] == Catch::Approx(0.64494897427831781).margin(1e-12));
  CHECK(gamma[2] == 1.0);
}

TEST_CASE("omega integrates low-degree polynomials exactly") {
  for (int n : {1, 2, 3}) {
    auto [gamma, omega] = bmpc::radau_points(n);
    // sum_m omega(m,c) * gamma_m^p == integral of s^p over [0, gamma_c]
    for (int p = 0; p < n; ++p)
      for (int c = 0; c < n; ++c) {
        double acc = 0.0;
        for (int m = 0; m < n; ++m)
          acc += omega(m, c) * std::pow(gamma[m], p);
        const double exact = std::pow(gamma[c], p + 1) / (p + 1);
        CHECK(acc == Catch::Approx(exact).margin(1e-12));
      }
  }
}

TEST_CASE("omega applied to the constant function reproduces gamma") {
  auto [gamma, omega] = bmpc::radau_points(3);
  for (int c = 0; c < 3; ++c) {
    double acc = 0.0;
    for (int m = 0; m < 3; ++m) acc += omega(m, c);
    CHECK(acc == Catch::Approx(gamma[c]).margin(1e-14));
  }
}

TEST_CASE("radau quadrature is exact to degree 2n-2") {
  for (int n : {2, 3}) {
    auto [gamma, omega] = bmpc::radau_points(n);
    for (int p = 0; p <= 2 * n - 2; ++p) {
      double acc = 0.0;
      for (int c = 0; c < n; ++c) acc += omega(c, n - 1) * std::pow(gamma[c], p);
      CHECK(acc == Catch::Approx(1.0 / (p + 1)).margin(1e-12));
    }
  }
}

TEST_CASE("unsupported order throws") {
  CHECK_THROWS_AS(bmpc::radau_points(0), std::invalid_argument);
  CHECK_THROWS_AS(bmpc::radau_points(4), std::invalid_argument);
}
