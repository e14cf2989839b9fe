// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <vector>

#include "bmpc/lp.hpp"
#include "bmpc/rng.hpp"

using bmpc::LinearProgram;
using bmpc::LpStatus;
using bmpc::RowSense;
using bmpc::Sense;

namespace {

// Brute-force oracle: enumerate candidate vertices as intersections of n
// active constraints drawn from rows and bounds, keep the feasible ones,
// return the best objective. Requires finite bounds on every variable.
std::optional<double> best_vertex_objective(const LinearProgram& lp) {
  const int n = lp.num_vars();
  struct Hyperplane {
    std::vector<double> a;
    double b;
  };
  std::vector<Hyperplane> planes;
  for (int i = 0; i < lp.num_rows(); ++i) {
    Hyperplane h{std::vector<double>(n, 0.0), lp.rhs[i]};
    for (const auto& [j, v] : lp.rows[i]) h.a[j] += v;
    planes.push_back(std::move(h));
  }
  for (int j = 0; j < n; ++j) {
    Hyperplane lo{std::vector<double>(n, 0.0), lp.lower[j]};
    lo.a[j] = 1.0;
    planes.push_back(lo);
    Hyperplane hi{std::vector<double>(n, 0.0), lp.upper[j]};
    hi.a[j] = 1.0;
    planes.push_back(hi);
  }

  auto feasible = [&](const Eigen::VectorXd& x) {
    for (int j = 0; j < n; ++j)
      if (x[j] < lp.lower[j] - 1e-7 || x[j] > lp.upper[j] + 1e-7) return false;
    for (int i = 0; i < lp.num_rows(); ++i) {
      double lhs = 0.0;
      for (const auto& [j, v] : lp.rows[i]) lhs += v * x[j];
      const double tol = 1e-7 * (1.0 + std::abs(lp.rhs[i]));
      switch (lp.row_sense[i]) {
        case RowSense::kLe: if (lhs > lp.rhs[i] + tol) return false; break;
        case RowSense::kGe: if (lhs < lp.rhs[i] - tol) return false; break;
        case RowSense::kEq: if (std::abs(lhs - lp.rhs[i]) > tol) return false; break;
      }
    }
    return true;
  };

  std::optional<double> best;
  std::vector<int> pick(n);
  const int p = static_cast<int>(planes.size());
  std::function<void(int, int)> recurse = [&](int start, int depth) {
    if (depth == n) {
      Eigen::MatrixXd A(n, n);
      Eigen::VectorXd b(n);
      for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) A(r, c) = planes[pick[r]].a[c];
        b[r] = planes[pick[r]].b;
      }
      Eigen::VectorXd x = A.partialPivLu().solve(b);
      if (!x.allFinite()) return;
      if ((A * x - b).cwiseAbs().maxCoeff() > 1e-8) return;  // singular
      if (!feasible(x)) return;
      double obj = 0.0;
      for (int j = 0; j < n; ++j) obj += lp.cost[j] * x[j];
      if (!best) best = obj;
      else if (lp.sense == Sense::kMin) best = std::min(*best, obj);
      else best = std::max(*best, obj);
      return;
    }
    for (int i = start; i < p; ++i) {
      pick[depth] = i;
      recurse(i + 1, depth + 1);
    }
  };
  recurse(0, 0);
  return best;
}

LinearProgram random_lp(bmpc::Rng& rng) {
  LinearProgram lp;
  lp.sense = rng.uniform() < 0.5 ? Sense::kMin : Sense::kMax;
  const int n = 1 + static_cast<int>(rng.below(5));
  const int m = static_cast<int>(rng.below(7));
  for (int j = 0; j < n; ++j) {
    const double lo = rng.uniform(-3.0, 0.0);
    lp.add_var(lo, lo + rng.uniform(0.3, 4.0), rng.uniform(-2.0, 2.0));
  }
  for (int i = 0; i < m; ++i) {
    bmpc::SparseRow row;
    for (int j = 0; j < n; ++j)
      if (rng.uniform() < 0.7) row.emplace_back(j, rng.uniform(-2.0, 2.0));
    if (row.empty()) row.emplace_back(0, 1.0);
    const double r = rng.uniform();
    const RowSense sense = r < 0.45 ? RowSense::kLe
                          : r < 0.9 ? RowSense::kGe
                                    : RowSense::kEq;
    lp.add_row(sense, rng.uniform(-3.0, 3.0), std::move(row));
  }
  return lp;
}

}  // namespace

TEST_CASE("single active bound") {
  LinearProgram lp;
  lp.add_var(0.0, 10.0, 1.0);
  lp.add_row(RowSense::kGe, 1.0, {{0, 1.0}});
  const auto sol = bmpc::solve_lp(lp);
  REQUIRE(sol.status == LpStatus::kOptimal);
  CHECK(sol.x[0] == Catch::Approx(1.0).margin(1e-8));
  CHECK(sol.objective == Catch::Approx(1.0).margin(1e-8));
}

TEST_CASE("two-variable maximization lands on the enumerated vertex") {
  LinearProgram lp;
  lp.sense = Sense::kMax;
  lp.add_var(0.0, bmpc::kInfBound, 3.0);
  lp.add_var(0.0, bmpc::kInfBound, 2.0);
  lp.add_row(RowSense::kLe, 4.0, {{0, 1.0}, {1, 1.0}});
  lp.add_row(RowSense::kLe, 2.0, {{0, 1.0}});
  const auto sol = bmpc::solve_lp(lp);
  REQUIRE(sol.status == LpStatus::kOptimal);
  // vertices (0,0), (2,0), (0,4), (2,2) -> objectives 0, 6, 8, 10
  CHECK(sol.x[0] == Catch::Approx(2.0).margin(1e-8));
  CHECK(sol.x[1] == Catch::Approx(2.0).margin(1e-8));
  CHECK(sol.objective == Catch::Approx(10.0).margin(1e-8));
}

TEST_CASE("empty feasible set reports infeasible") {
  LinearProgram lp;
  lp.add_var(-bmpc::kInfBound, bmpc::kInfBound, 1.0);
  lp.add_row(RowSense::kGe, 1.0, {{0, 1.0}});
  lp.add_row(RowSense::kLe, 0.0, {{0, 1.0}});
  CHECK(bmpc::solve_lp(lp).status == LpStatus::kInfeasible);
}

TEST_CASE("unbounded detection") {
  LinearProgram lp;
  lp.sense = Sense::kMax;
  lp.add_var(0.0, bmpc::kInfBound, 1.0);
  CHECK(bmpc::solve_lp(lp).status == LpStatus::kUnbounded);
}

TEST_CASE("dimension mismatch throws") {
  LinearProgram lp;
  lp.add_var(0.0, 1.0, 1.0);
  lp.rows.push_back({{3, 1.0}});
  lp.row_sense.push_back(RowSense::kLe);
  lp.rhs.push_back(1.0);
  CHECK_THROWS_AS(bmpc::solve_lp(lp), std::invalid_argument);
}

TEST_CASE("reoptimize after a bound-style cut") {
  LinearProgram lp;
  lp.add_var(0.0, 2.0, -1.0);
  const auto prior = bmpc::solve_lp(lp);
  REQUIRE(prior.status == LpStatus::kOptimal);
  const auto sol = bmpc::reoptimize_with_rows(lp, {{{0, 1.0}}},
                                              {RowSense::kLe}, {1.0}, prior);
  REQUIRE(sol.status == LpStatus::kOptimal);
  CHECK(sol.x[0] == Catch::Approx(1.0).margin(1e-8));
  CHECK(sol.objective == Catch::Approx(-1.0).margin(1e-8));
}

TEST_CASE("reoptimize against the augmented polygon") {
  LinearProgram lp;
  lp.sense = Sense::kMax;
  lp.add_var(0.0, bmpc::kInfBound, 3.0);
  lp.add_var(0.0, bmpc::kInfBound, 2.0);
  lp.add_row(RowSense::kLe, 4.0, {{0, 1.0}, {1, 1.0}});
  lp.add_row(RowSense::kLe, 2.0, {{0, 1.0}});
  const auto prior = bmpc::solve_lp(lp);
  const auto sol = bmpc::reoptimize_with_rows(
      lp, {{{0, 1.0}, {1, 2.0}}}, {RowSense::kLe}, {5.0}, prior);
  REQUIRE(sol.status == LpStatus::kOptimal);
  // vertices of the augmented polygon peak at (2, 1.5)
  CHECK(sol.x[0] == Catch::Approx(2.0).margin(1e-8));
  CHECK(sol.x[1] == Catch::Approx(1.5).margin(1e-8));
  CHECK(sol.objective == Catch::Approx(9.0).margin(1e-8));
}

TEST_CASE("a contradictory cut prunes the region") {
  LinearProgram lp;
  lp.add_var(0.0, 2.0, -1.0);
  const auto prior = bmpc::solve_lp(lp);
  CHECK_THROWS_AS(
      bmpc::reoptimize_with_rows(lp, {{}}, {RowSense::kLe}, {-1.0}, prior),
      bmpc::InfeasibleAfterCut);
}

TEST_CASE("random LPs agree with vertex enumeration") {
  bmpc::Rng rng(20240817);
  int optimal_seen = 0;
  for (int trial = 0; trial < 80; ++trial) {
    const LinearProgram lp = random_lp(rng);
    const auto oracle = best_vertex_objective(lp);
    const auto sol = bmpc::solve_lp(lp);
    INFO("trial " << trial);
    if (oracle) {
      REQUIRE(sol.status == LpStatus::kOptimal);
      CHECK(sol.objective == Catch::Approx(*oracle).margin(1e-6));
      ++optimal_seen;
    } else {
      CHECK(sol.status == LpStatus::kInfeasible);
    }
  }
  CHECK(optimal_seen > 20);  // the generator must exercise the optimal path
}

TEST_CASE("strong duality and complementary slackness") {
  bmpc::Rng rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    const LinearProgram lp = random_lp(rng);
    const auto sol = bmpc::solve_lp(lp);
    if (sol.status != LpStatus::kOptimal) continue;
    // dual objective: y b + sum of bound contributions of the reduced costs
    double dual_obj = 0.0;
    for (int i = 0; i < lp.num_rows(); ++i) dual_obj += sol.duals[i] * lp.rhs[i];
    for (int j = 0; j < lp.num_vars(); ++j) {
      const double d = sol.reduced_costs[j];
      const bool min_form = lp.sense == Sense::kMin;
      const double dmin = min_form ? d : -d;
      if (dmin > 0) dual_obj += d * lp.lower[j];
      else dual_obj += d * lp.upper[j];
    }
    INFO("trial " << trial);
    CHECK(dual_obj == Catch::Approx(sol.objective)
                          .margin(1e-6 * (1.0 + std::abs(sol.objective))));
    // complementary slackness
    for (int i = 0; i < lp.num_rows(); ++i) {
      if (lp.row_sense[i] == RowSense::kEq) continue;
      double lhs = 0.0;
      for (const auto& [j, v] : lp.rows[i]) lhs += v * sol.x[j];
      const double slack = lp.rhs[i] - lhs;
      CHECK(std::abs(slack * sol.duals[i]) < 1e-5 * (1.0 + std::abs(lp.rhs[i])));
    }
  }
}

TEST_CASE("warm dual reoptimization matches cold solves over cut sequences") {
  bmpc::Rng rng(99);
  int compared = 0;
  for (int trial = 0; trial < 100 && compared < 60; ++trial) {
    LinearProgram lp = random_lp(rng);
    auto warm = bmpc::solve_lp(lp);
    if (warm.status != LpStatus::kOptimal) continue;
    for (int pass = 0; pass < 3; ++pass) {
      // random cut through the current optimum, shifted to trim the region
      bmpc::SparseRow row;
      double act = 0.0;
      for (int j = 0; j < lp.num_vars(); ++j) {
        const double a = rng.uniform(-1.0, 1.0);
        row.emplace_back(j, a);
        act += a * warm.x[j];
      }
      const double rhs = act - rng.uniform(0.0, 0.5);
      try {
        warm = bmpc::reoptimize_with_rows(lp, {row}, {RowSense::kLe}, {rhs},
                                          warm);
      } catch (const bmpc::InfeasibleAfterCut&) {
        break;
      }
      lp.add_row(RowSense::kLe, rhs, row);
      const auto cold = bmpc::solve_lp(lp);
      REQUIRE(cold.status == LpStatus::kOptimal);
      INFO("trial " << trial << " pass " << pass);
      CHECK(warm.objective ==
            Catch::Approx(cold.objective)
                .margin(1e-6 * (1.0 + std::abs(cold.objective))));
      ++compared;
    }
  }
  CHECK(compared >= 30);
}

TEST_CASE("mps dump emits all sections") {
  LinearProgram lp;
  lp.add_var(0.0, 2.0, 1.5);
  lp.add_row(RowSense::kLe, 1.0, {{0, 1.0}});
  std::ostringstream os;
  bmpc::write_mps(lp, os);
  const std::string text = os.str();
  CHECK(text.find("ROWS") != std::string::npos);
  CHECK(text.find("COLUMNS") != std::string::npos);
  CHECK(text.find("BOUNDS") != std::string::npos);
  CHECK(text.find("ENDATA") != std::string::npos);
}
