// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "bmpc/schedule.hpp"
#include "bmpc/surrogate.hpp"

namespace bmpc {

enum class GbdStatus { kOptimal, kMasterInfeasible, kIterationLimit };

struct SolveReport {
  std::string algorithm;
  GbdStatus status = GbdStatus::kMasterInfeasible;
  double objective = 0.0;       // algorithm's converged value
  double true_objective = 0.0;  // incumbent re-evaluated with exact solves
  double error_pct = std::numeric_limits<double>::quiet_NaN();
  long iterations = 0;  // outer iterations (0 for branch and check)
  long nodes = 0;
  long cuts_generated = 0;
  long cuts_applied = 0;
  long subproblem_solves = 0;
  double wall_seconds = 0.0;
  std::vector<std::pair<double, double>> bound_trace;  // (incumbent, relaxation)
  std::vector<double> incumbent;
};

struct GbdOptions {
  double tol = 1e-6;
  int max_iter = 200;
  MipOptions mip;
};

struct MasterInfeasible : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline double error_metric(double f_gbd, double f_alt) {
  if (f_gbd == 0.0)
    throw std::invalid_argument("error_metric: reference objective is zero");
  return 100.0 * std::abs(f_gbd - f_alt) / std::abs(f_gbd);
}

inline BendersCut make_pair_cut(int i, int j, int slot, double anchor,
                                const TransitionResult& r) {
  if (!r.converged)
    throw SubproblemNotConverged("make_pair_cut: result not converged");
  BendersCut cut;
  cut.target = BendersCut::Target::kPair;
  cut.from = i;
  cut.to = j;
  cut.slot = slot;
  cut.anchor = anchor;
  cut.value = r.cost;
  cut.slope = r.multiplier;
  return cut;
}

inline BendersCut make_initial_cut(int product, double x0, double anchor,
                                   const TransitionResult& r) {
  if (!r.converged)
    throw SubproblemNotConverged("make_initial_cut: result not converged");
  BendersCut cut;
  cut.target = BendersCut::Target::kInitial;
  cut.to = product;
  cut.slot = 0;
  cut.anchor = anchor;
  cut.value = r.cost;
  cut.slope = r.multiplier;
  cut.anchor_state = x0;
  return cut;
}

// Cut evaluated at a transition time.
inline double cut_value_at(const BendersCut& cut, double theta) {
  return cut.value - cut.slope * (theta - cut.anchor);
}

namespace detail {

struct Active {
  bool initial = false;
  int i = -1, j = -1, k = -1;
  double anchor = 0.0;
};

inline std::vector<Active> active_transitions(const ScheduleInstance& inst,
                                              const MasterIndexMap& map,
                                              const std::vector<double>& x) {
  const int n = inst.num_products();
  std::vector<Active> out;
  for (int p = 0; p < n; ++p)
    if (x[map.first_ind(p)] > 0.5) {
      // an initial transition with zero reachable minimum costs nothing
      if (inst.theta_hat_min[p] > 1e-9) {
        Active a;
        a.initial = true;
        a.j = p;
        a.anchor = x[map.init_time(p)];
        out.push_back(a);
      }
      break;
    }
  map.for_each_pair([&](int i, int j) {
    for (int k = 0; k < n; ++k)
      if (x[map.trans_ind(i, j, k)] > 0.5) {
        Active a;
        a.i = i;
        a.j = j;
        a.k = k;
        a.anchor = x[map.trans_time(i, j, k)];
        out.push_back(a);
      }
  });
  return out;
}

// Exact subproblem pass over the active transitions; returns the cuts and
// the summed exact costs of the point.
struct ExactPass {
  std::vector<BendersCut> cuts;
  double total_cost = 0.0;
  long solves = 0;
};

inline ExactPass exact_pass(const ScheduleInstance& inst,
                            const std::vector<Active>& actives,
                            bool replicate_slots) {
  ExactPass pass;
  pass.cuts.resize(actives.size());
  std::vector<double> costs(actives.size(), 0.0);
  parallel_for(actives.size(), [&](std::size_t idx) {
    const Active& a = actives[idx];
    if (a.initial) {
      const double anchor =
          std::max({a.anchor, inst.theta_hat_min_model[a.j], 1e-6});
      const TransitionNlp nlp = initial_transition_nlp(inst, a.j, anchor);
      const TransitionResult r = solve_transition(nlp);
      if (!r.converged)
        throw SubproblemNotConverged("exact_pass: initial transition");
      pass.cuts[idx] = make_initial_cut(a.j, inst.x0, anchor, r);
      costs[idx] = r.cost;
    } else {
      const double anchor =
          std::max(a.anchor, inst.theta_min_model[a.i][a.j]);
      const TransitionNlp nlp = pair_transition_nlp(inst, a.i, a.j, anchor);
      const TransitionResult r = solve_transition(nlp);
      if (!r.converged)
        throw SubproblemNotConverged("exact_pass: pair transition");
      pass.cuts[idx] = make_pair_cut(
          a.i, a.j, replicate_slots ? BendersCut::kAllSlots : a.k, anchor, r);
      costs[idx] = r.cost;
    }
  });
  for (double c : costs) pass.total_cost += c;
  pass.solves = static_cast<long>(actives.size());
  return pass;
}

inline SolveReport iterative_gbd(const ScheduleInstance& inst,
                                 const GbdOptions& opts, bool hybrid) {
  if (!inst.prepared)
    throw std::logic_error("iterative_gbd: instance not prepared");
  const auto t_start = std::chrono::steady_clock::now();
  SolveReport report;
  report.algorithm = hybrid ? "hM-GBD" : "M-GBD";

  std::vector<BendersCut> cuts;
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  std::vector<double> best_x;

  for (int it = 1; it <= opts.max_iter; ++it) {
    report.iterations = it;
    auto [mip, map] = build_master(inst, cuts);
    const MipSolution sol = solve_mip(mip, nullptr, opts.mip);
    report.nodes += sol.nodes;
    if (sol.status == MipStatus::kInfeasible) {
      if (it == 1) {
        report.status = GbdStatus::kMasterInfeasible;
        report.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                          t_start)
                .count();
        return report;
      }
      throw MasterInfeasible("iterative_gbd: master became infeasible");
    }
    upper = sol.objective;

    const std::vector<Active> actives = active_transitions(inst, map, sol.x);
    const ExactPass pass = exact_pass(inst, actives, hybrid);
    report.subproblem_solves += pass.solves;
    const double true_value =
        schedule_profit(inst, map, sol.x) - pass.total_cost;
    if (true_value > lower) {
      lower = true_value;
      best_x = sol.x;
    }
    report.bound_trace.emplace_back(lower, upper);
    for (const BendersCut& cut : pass.cuts) cuts.push_back(cut);
    report.cuts_generated = static_cast<long>(cuts.size());

    if ((upper - lower) <= opts.tol * std::max(std::abs(upper), 1e-9)) {
      report.status = GbdStatus::kOptimal;
      break;
    }
    if (it == opts.max_iter) report.status = GbdStatus::kIterationLimit;
  }

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  report.objective = lower;
  report.true_objective = lower;
  report.incumbent = std::move(best_x);
  // replicated cuts expand into one row per slot
  report.cuts_applied = 0;
  for (const BendersCut& cut : cuts)
    report.cuts_applied += cut.slot == BendersCut::kAllSlots
                               ? inst.num_products()
                               : 1;
  return report;
}

}  // namespace detail

// Standard multicut scheme: in each iteration the master MIP is re-solved
// from scratch and one cut per occurring transition is added at the
// master's transition times.
inline SolveReport solve_multicut(const ScheduleInstance& inst,
                                  GbdOptions opts = {}) {
  return detail::iterative_gbd(inst, opts, /*hybrid=*/false);
}

// Hybrid multicut: identical loop, but every pair cut is replicated across
// all slots (the pair value function does not depend on the slot).
inline SolveReport solve_hybrid_multicut(const ScheduleInstance& inst,
                                         GbdOptions opts = {}) {
  return detail::iterative_gbd(inst, opts, /*hybrid=*/true);
}

// Branch and check: one tree, cuts generated lazily at integer-feasible
// nodes from exact subproblem solves (bundle == nullptr) or from the
// trained surrogate bundle, and applied to the shared pool.
inline SolveReport solve_branch_and_check(const ScheduleInstance& inst,
                                          const SurrogateBundle* bundle,
                                          GbdOptions opts = {}) {
  if (!inst.prepared)
    throw std::logic_error("solve_branch_and_check: instance not prepared");
  if (bundle && !bundle->covers(inst.num_products()))
    throw UncoveredTarget(
        "solve_branch_and_check: bundle does not cover this product set");
  const auto t_start = std::chrono::steady_clock::now();

  SolveReport report;
  report.algorithm =
      bundle ? "BnC-" + family_name(bundle->family) : "BnC-exact";

  auto [mip, map] = build_master(inst, {});
  long oracle_solves = 0;
  long generated = 0;

  CutOracle oracle = [&](const std::vector<double>& x) {
    const std::vector<detail::Active> actives =
        detail::active_transitions(inst, map, x);
    std::vector<CutRow> rows;
    if (!bundle) {
      const detail::ExactPass pass =
          detail::exact_pass(inst, actives, /*replicate=*/false);
      oracle_solves += pass.solves;
      for (const BendersCut& cut : pass.cuts)
        rows.push_back(cut_to_row(cut, map, cut.slot));
    } else {
      for (const detail::Active& a : actives) {
        const BendersCut cut =
            a.initial
                ? predict_initial_cut(*bundle, a.j, a.anchor, inst.x0,
                                      inst.theta_hat_min[a.j])
                : predict_pair_cut(*bundle, a.i, a.j, a.k, a.anchor);
        rows.push_back(cut_to_row(cut, map, cut.slot));
      }
    }
    generated += static_cast<long>(rows.size());
    return rows;
  };

  BranchAndBound engine(mip, oracle, opts.mip);
  const MipSolution sol = engine.solve();
  report.nodes = sol.nodes;
  report.cuts_generated = generated;
  report.cuts_applied = engine.cut_pool_size();
  report.subproblem_solves = oracle_solves;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();

  switch (sol.status) {
    case MipStatus::kInfeasible:
      report.status = GbdStatus::kMasterInfeasible;
      return report;
    case MipStatus::kNodeLimit:
      report.status = GbdStatus::kIterationLimit;
      break;
    case MipStatus::kOptimal:
      report.status = GbdStatus::kOptimal;
      break;
  }
  report.objective = sol.objective;
  report.incumbent = sol.x;
  // ground-truth re-evaluation, outside the timed solve
  const TrueObjective truth = evaluate_true_objective(inst, map, sol.x);
  report.true_objective = truth.objective;
  return report;
}

}  // namespace bmpc
