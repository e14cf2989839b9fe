// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <optional>
#include <vector>

#include "bmpc/mip.hpp"
#include "bmpc/rng.hpp"

using bmpc::LinearProgram;
using bmpc::MipProblem;
using bmpc::MipStatus;
using bmpc::RowSense;
using bmpc::Sense;

namespace {

// Oracle: enumerate every binary assignment, complete each with an LP over
// the continuous variables, keep the best objective.
std::optional<double> enumerate_mip(const MipProblem& p) {
  const int nb = static_cast<int>(p.integrality.size());
  std::optional<double> best;
  for (unsigned mask = 0; mask < (1u << nb); ++mask) {
    LinearProgram fixed = p.base;
    for (int b = 0; b < nb; ++b) {
      const double v = (mask >> b) & 1u ? 1.0 : 0.0;
      fixed.lower[p.integrality[b]] = v;
      fixed.upper[p.integrality[b]] = v;
    }
    const auto sol = bmpc::solve_lp(fixed);
    if (sol.status != bmpc::LpStatus::kOptimal) continue;
    if (!best) best = sol.objective;
    else if (p.base.sense == Sense::kMin) best = std::min(*best, sol.objective);
    else best = std::max(*best, sol.objective);
  }
  return best;
}

MipProblem random_mip(bmpc::Rng& rng) {
  MipProblem p;
  p.base.sense = rng.uniform() < 0.5 ? Sense::kMin : Sense::kMax;
  const int nb = 2 + static_cast<int>(rng.below(7));
  const int nc = static_cast<int>(rng.below(3));
  for (int j = 0; j < nb; ++j) {
    p.base.add_var(0.0, 1.0, rng.uniform(-3.0, 3.0));
    p.integrality.push_back(j);
  }
  for (int j = 0; j < nc; ++j)
    p.base.add_var(0.0, rng.uniform(0.5, 2.0), rng.uniform(-2.0, 2.0));
  const int m = 1 + static_cast<int>(rng.below(5));
  for (int i = 0; i < m; ++i) {
    bmpc::SparseRow row;
    for (int j = 0; j < nb + nc; ++j)
      if (rng.uniform() < 0.6) row.emplace_back(j, rng.uniform(-2.0, 2.0));
    if (row.empty()) row.emplace_back(0, 1.0);
    p.base.add_row(rng.uniform() < 0.7 ? RowSense::kLe : RowSense::kGe,
                   rng.uniform(-2.0, 3.0), std::move(row));
  }
  return p;
}

}  // namespace

TEST_CASE("knapsack matches enumeration of the 8 assignments") {
  MipProblem p;
  p.base.sense = Sense::kMax;
  p.base.add_var(0.0, 1.0, 5.0);
  p.base.add_var(0.0, 1.0, 4.0);
  p.base.add_var(0.0, 1.0, 3.0);
  p.base.add_row(RowSense::kLe, 3.0, {{0, 2.0}, {1, 3.0}, {2, 1.0}});
  p.integrality = {0, 1, 2};
  const auto oracle = enumerate_mip(p);
  REQUIRE(oracle);
  CHECK(*oracle == Catch::Approx(8.0));
  const auto sol = bmpc::solve_mip(p);
  REQUIRE(sol.status == MipStatus::kOptimal);
  CHECK(sol.objective == Catch::Approx(8.0).margin(1e-8));
  CHECK(sol.x[0] == Catch::Approx(1.0).margin(1e-6));
  CHECK(sol.x[1] == Catch::Approx(0.0).margin(1e-6));
  CHECK(sol.x[2] == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("2x2 assignment picks the diagonal") {
  MipProblem p;
  p.base.sense = Sense::kMin;
  // x[i*2+j]: worker i does job j, costs [[1,2],[2,1]]
  p.base.add_var(0.0, 1.0, 1.0);
  p.base.add_var(0.0, 1.0, 2.0);
  p.base.add_var(0.0, 1.0, 2.0);
  p.base.add_var(0.0, 1.0, 1.0);
  p.base.add_row(RowSense::kEq, 1.0, {{0, 1.0}, {1, 1.0}});
  p.base.add_row(RowSense::kEq, 1.0, {{2, 1.0}, {3, 1.0}});
  p.base.add_row(RowSense::kEq, 1.0, {{0, 1.0}, {2, 1.0}});
  p.base.add_row(RowSense::kEq, 1.0, {{1, 1.0}, {3, 1.0}});
  p.integrality = {0, 1, 2, 3};
  const auto sol = bmpc::solve_mip(p);
  REQUIRE(sol.status == MipStatus::kOptimal);
  CHECK(sol.objective == Catch::Approx(2.0).margin(1e-8));
  CHECK(sol.x[0] == Catch::Approx(1.0).margin(1e-6));
  CHECK(sol.x[3] == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("infeasible relaxation propagates") {
  MipProblem p;
  p.base.add_var(0.0, 1.0, 1.0);
  p.base.add_row(RowSense::kGe, 2.0, {{0, 1.0}});
  p.integrality = {0};
  CHECK(bmpc::solve_mip(p).status == MipStatus::kInfeasible);
}

TEST_CASE("select_node prefers the best bound, then depth, then age") {
  using bmpc::BnbNode;
  std::vector<BnbNode> open(2);
  open[0].parent_objective = -3.0;
  open[1].parent_objective = -5.0;
  CHECK(bmpc::select_node(open) == 1);

  open[0].parent_objective = open[1].parent_objective = -4.0;
  open[0].depth = 1;
  open[1].depth = 4;
  CHECK(bmpc::select_node(open) == 1);

  open.resize(1);
  CHECK(bmpc::select_node(open) == 0);
  open.clear();
  CHECK_THROWS_AS(bmpc::select_node(open), std::invalid_argument);
}

TEST_CASE("branching picks the most fractional variable") {
  bmpc::BnbNode node;
  bmpc::LpSolution relax;
  relax.x = {0.5, 0.9};
  auto [lo, hi] = bmpc::branch(node, relax, {0, 1});
  CHECK(lo.fixings.count(0) == 1);
  CHECK(lo.fixings.at(0) == std::make_pair(0.0, 0.0));
  CHECK(hi.fixings.at(0) == std::make_pair(1.0, 1.0));

  relax.x = {0.7, 0.3};  // tie in |v - 0.5| -> lowest index
  auto [lo2, hi2] = bmpc::branch(node, relax, {0, 1});
  CHECK(lo2.fixings.count(0) == 1);

  relax.x = {1.0, 0.0};
  CHECK_THROWS_AS(bmpc::branch(node, relax, {0, 1}),
                  bmpc::NoFractionalVariable);
}

TEST_CASE("random mips match assignment enumeration") {
  bmpc::Rng rng(4242);
  int optimal = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const MipProblem p = random_mip(rng);
    const auto oracle = enumerate_mip(p);
    const auto sol = bmpc::solve_mip(p);
    INFO("trial " << trial);
    if (oracle) {
      REQUIRE(sol.status == MipStatus::kOptimal);
      CHECK(sol.objective ==
            Catch::Approx(*oracle).margin(1e-6 * (1.0 + std::abs(*oracle))));
      ++optimal;
    } else {
      CHECK(sol.status == MipStatus::kInfeasible);
    }
  }
  CHECK(optimal > 10);
}

TEST_CASE("lazy cuts land in the pool and bind the incumbent") {
  // min -3a - 2b + eta with the oracle enforcing eta >= a + b - 1
  MipProblem p;
  p.base.sense = Sense::kMin;
  p.base.add_var(0.0, 1.0, -3.0);
  p.base.add_var(0.0, 1.0, -2.0);
  p.base.add_var(0.0, bmpc::kInfBound, 1.0);  // eta
  p.integrality = {0, 1};

  auto oracle = [](const std::vector<double>& x) {
    std::vector<bmpc::CutRow> cuts;
    bmpc::CutRow cut;
    cut.coeffs = {{2, 1.0}, {0, -1.0}, {1, -1.0}};
    cut.sense = RowSense::kGe;
    cut.rhs = -1.0;  // eta - a - b >= -1
    cuts.push_back(cut);
    (void)x;
    return cuts;
  };

  bmpc::BranchAndBound engine(p, oracle, {});
  const auto sol = engine.solve();
  REQUIRE(sol.status == MipStatus::kOptimal);
  CHECK(sol.objective == Catch::Approx(-4.0).margin(1e-7));
  CHECK(sol.x[0] == Catch::Approx(1.0).margin(1e-6));
  CHECK(sol.x[1] == Catch::Approx(1.0).margin(1e-6));
  CHECK(sol.x[2] == Catch::Approx(1.0).margin(1e-6));
  CHECK(engine.cut_pool_size() >= 1);
  CHECK(sol.cuts == engine.cut_pool_size());
  // every pooled cut holds at the incumbent
  for (const auto& cut : engine.cut_pool()) {
    double lhs = 0.0;
    for (const auto& [j, v] : cut.coeffs) lhs += v * sol.x[j];
    CHECK(lhs >= cut.rhs - 1e-6);
  }
}

TEST_CASE("node limit returns the flagged best incumbent") {
  bmpc::Rng rng(5);
  const MipProblem p = random_mip(rng);
  bmpc::MipOptions opts;
  opts.node_limit = 1;
  const auto sol = bmpc::solve_mip(p, nullptr, opts);
  CHECK((sol.status == MipStatus::kNodeLimit ||
         sol.status == MipStatus::kOptimal ||
         sol.status == MipStatus::kInfeasible));
}
