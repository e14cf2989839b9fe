// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <queue>
#include <stdexcept>
#include <vector>

#include "bmpc/lp.hpp"

namespace bmpc {

constexpr double kIntegralityTol = 1e-6;

struct MipProblem {
  LinearProgram base;
  std::vector<int> integrality;  // indices of binary variables

  void validate() const {
    base.validate();
    for (int j : integrality) {
      if (j < 0 || j >= base.num_vars())
        throw std::invalid_argument("MipProblem: integrality index out of range");
      if (base.lower[j] < -kIntegralityTol || base.upper[j] > 1.0 + kIntegralityTol)
        throw std::invalid_argument(
            "MipProblem: integral variable bounds outside [0,1]");
    }
  }
};

struct MipOptions {
  double gap = 1e-6;
  long node_limit = 1000000;
  double time_limit_seconds = std::numeric_limits<double>::infinity();
};

enum class MipStatus { kOptimal, kInfeasible, kNodeLimit };

struct MipSolution {
  MipStatus status = MipStatus::kInfeasible;
  std::vector<double> x;
  double objective = 0.0;
  long nodes = 0;
  long cuts = 0;
  double wall_seconds = 0.0;
};

struct CutRow {
  SparseRow coeffs;
  RowSense sense = RowSense::kGe;
  double rhs = 0.0;
};

// Called at integer-feasible relaxation points; returns rows valid for the
// original problem. The engine applies every returned row globally.
using CutOracle =
    std::function<std::vector<CutRow>(const std::vector<double>& x)>;

// Hook for the generic strengthening cuts the branch-and-check scheme allows
// at every node. Deliberately inert; the extension point is the contract.
using MipCutHook =
    std::function<std::vector<CutRow>(const std::vector<double>& x, bool integral)>;

struct BnbNode {
  std::map<int, std::pair<double, double>> fixings;
  double parent_objective = 0.0;  // minimized form
  int depth = 0;
  long creation_index = 0;
  long cut_stamp = 0;
};

namespace detail {

// best-bound first, then deeper, then earlier creation
inline bool node_before(const BnbNode& a, const BnbNode& b) {
  if (a.parent_objective != b.parent_objective)
    return a.parent_objective < b.parent_objective;
  if (a.depth != b.depth) return a.depth > b.depth;
  return a.creation_index < b.creation_index;
}

}  // namespace detail

inline std::size_t select_node(const std::vector<BnbNode>& open) {
  if (open.empty()) throw std::invalid_argument("select_node: no open nodes");
  std::size_t best = 0;
  for (std::size_t i = 1; i < open.size(); ++i)
    if (detail::node_before(open[i], open[best])) best = i;
  return best;
}

struct NoFractionalVariable : std::logic_error {
  using std::logic_error::logic_error;
};

inline int most_fractional_variable(const std::vector<double>& x,
                                    const std::vector<int>& integrality) {
  int best = -1;
  double best_score = std::numeric_limits<double>::infinity();
  for (int j : integrality) {
    const double v = x[j];
    if (std::abs(v - std::round(v)) <= kIntegralityTol) continue;
    const double score = std::abs(v - 0.5);
    if (score < best_score - 1e-12) {
      best_score = score;
      best = j;
    }
  }
  return best;
}

inline std::pair<BnbNode, BnbNode> branch(const BnbNode& node,
                                          const LpSolution& relax,
                                          const std::vector<int>& integrality) {
  const int v = most_fractional_variable(relax.x, integrality);
  if (v < 0)
    throw NoFractionalVariable("branch: relaxation is already integral");
  BnbNode lo = node, hi = node;
  lo.fixings[v] = {0.0, 0.0};
  hi.fixings[v] = {1.0, 1.0};
  lo.depth = hi.depth = node.depth + 1;
  lo.parent_objective = hi.parent_objective = relax.objective;
  return {std::move(lo), std::move(hi)};
}

// Branch and bound with lazily generated globally valid cuts.  Cuts live in
// one pool shared by the whole tree: they are appended to the hot workspace
// as soon as the oracle emits them, so every node relaxation solved
// afterwards (including re-activated older nodes) sees them.
class BranchAndBound {
 public:
  BranchAndBound(const MipProblem& problem, CutOracle oracle, MipOptions opts)
      : problem_(problem),
        oracle_(std::move(oracle)),
        opts_(opts),
        maximize_(problem.base.sense == Sense::kMax),
        solver_(problem.base) {
    problem.validate();
  }

  void set_mip_cut_hook(MipCutHook hook) { mip_cut_hook_ = std::move(hook); }

  long cut_pool_size() const { return cuts_generated_; }
  const std::vector<CutRow>& cut_pool() const { return pool_; }
  long oracle_calls() const { return oracle_calls_; }

  MipSolution solve() {
    const auto t0 = std::chrono::steady_clock::now();
    MipSolution result;

    LpStatus root = solver_.solve_primal_from_scratch();
    if (root == LpStatus::kInfeasible) {
      result.status = MipStatus::kInfeasible;
      return result;
    }
    if (root == LpStatus::kUnbounded)
      throw std::runtime_error("solve_mip: relaxation unbounded");

    const std::size_t max_nodes =
        (1ull << std::min<std::size_t>(problem_.integrality.size() + 1, 62)) - 1;

    struct Entry {
      BnbNode node;
    };
    auto cmp = [](const Entry& a, const Entry& b) {
      return detail::node_before(b.node, a.node);  // priority queue is max-heap
    };
    std::priority_queue<Entry, std::vector<Entry>, decltype(cmp)> open(cmp);

    BnbNode root_node;
    root_node.parent_objective = internal(solver_.objective());
    root_node.creation_index = next_creation_++;
    open.push({std::move(root_node)});

    incumbent_ = std::numeric_limits<double>::infinity();
    incumbent_x_.clear();
    long nodes = 0;

    while (!open.empty()) {
      if (nodes >= opts_.node_limit) {
        result.status = MipStatus::kNodeLimit;
        break;
      }
      if (static_cast<std::size_t>(nodes) > max_nodes)
        throw std::logic_error("solve_mip: node count exceeded 2^(B+1)-1");

      BnbNode node = open.top().node;
      open.pop();
      if (prunable(node.parent_objective, incumbent_)) {
        if (!incumbent_x_.empty()) break;  // best-bound order: gap closed
        continue;
      }

      // A freshly pooled cut can exclude the stored incumbent (surrogate
      // cuts are not guaranteed underestimators); the incumbent's node goes
      // back into the queue and must re-qualify under the full pool.
      auto reopen_if_cut_off = [&](std::size_t first_new) {
        if (incumbent_x_.empty()) return;
        for (std::size_t c = first_new; c < pool_.size(); ++c)
          if (violated(pool_[c], incumbent_x_)) {
            incumbent_ = std::numeric_limits<double>::infinity();
            incumbent_x_.clear();
            BnbNode back = incumbent_node_;
            back.creation_index = next_creation_++;
            open.push({std::move(back)});
            return;
          }
      };

      apply_node(node);
      LpStatus status = solver_.resolve_dual();
      ++nodes;
      if (status == LpStatus::kInfeasible) continue;
      if (status == LpStatus::kUnbounded)
        throw std::runtime_error("solve_mip: node relaxation unbounded");

      double bound = internal(solver_.objective());
      if (prunable(bound, incumbent_)) continue;
      std::vector<double> x = solver_.primal();

      bool pruned = false;
      int frac = most_fractional_variable(x, problem_.integrality);
      if (frac < 0 && oracle_) {
        // integer point: lazily separate until the point is cut-feasible
        for (int pass = 0; pass < 1000; ++pass) {
          ++oracle_calls_;
          std::vector<CutRow> cuts = oracle_(x);
          bool added = false;
          const std::size_t first_new = pool_.size();
          for (const CutRow& cut : cuts)
            if (violated(cut, x)) {
              append_cut(cut);
              added = true;
            }
          if (!added) break;
          reopen_if_cut_off(first_new);
          status = solver_.resolve_dual();
          if (status == LpStatus::kInfeasible) { pruned = true; break; }
          bound = internal(solver_.objective());
          if (prunable(bound, incumbent_)) { pruned = true; break; }
          x = solver_.primal();
          frac = most_fractional_variable(x, problem_.integrality);
          if (frac >= 0) break;
        }
      }
      if (pruned) continue;

      if (mip_cut_hook_) {
        // inert by default; rows returned here would join the global pool
        const std::size_t first_new = pool_.size();
        for (const CutRow& cut : mip_cut_hook_(x, frac < 0))
          append_cut(cut);
        reopen_if_cut_off(first_new);
      }

      node.cut_stamp = cuts_generated_;
      if (frac < 0) {
        if (bound < incumbent_) {
          incumbent_ = bound;
          incumbent_x_ = x;
          incumbent_node_ = node;
        }
        continue;
      }

      LpSolution relax;
      relax.x = x;
      relax.objective = bound;
      auto [lo, hi] = branch(node, relax, problem_.integrality);
      lo.creation_index = next_creation_++;
      hi.creation_index = next_creation_++;
      lo.cut_stamp = hi.cut_stamp = cuts_generated_;
      open.push({std::move(lo)});
      open.push({std::move(hi)});
    }

    result.nodes = nodes;
    result.cuts = cuts_generated_;
    if (result.status != MipStatus::kNodeLimit)
      result.status =
          incumbent_x_.empty() ? MipStatus::kInfeasible : MipStatus::kOptimal;
    if (!incumbent_x_.empty()) {
      result.x = std::move(incumbent_x_);
      result.objective = maximize_ ? -incumbent_ : incumbent_;
      check_incumbent(result);
    }
    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    return result;
  }

 private:
  double internal(double native) const { return maximize_ ? -native : native; }

  bool prunable(double bound, double incumbent) const {
    if (!std::isfinite(incumbent)) return false;
    return bound >= incumbent - opts_.gap * std::max(std::abs(incumbent), 1e-6);
  }

  void apply_node(const BnbNode& node) {
    solver_.reset_bounds();
    for (const auto& [var, bounds] : node.fixings)
      solver_.set_bounds(var, bounds.first, bounds.second);
  }

  bool violated(const CutRow& cut, const std::vector<double>& x) const {
    double lhs = 0.0;
    for (const auto& [j, v] : cut.coeffs) lhs += v * x[j];
    const double tol = 1e-6 * (1.0 + std::abs(cut.rhs));
    switch (cut.sense) {
      case RowSense::kLe: return lhs > cut.rhs + tol;
      case RowSense::kGe: return lhs < cut.rhs - tol;
      case RowSense::kEq: return std::abs(lhs - cut.rhs) > tol;
    }
    return false;
  }

  void append_cut(const CutRow& cut) {
    solver_.add_row(cut.coeffs, cut.sense, cut.rhs);
    pool_.push_back(cut);
    ++cuts_generated_;
  }

  void check_incumbent(const MipSolution& sol) const {
    for (int j : problem_.integrality) {
      const double v = sol.x[j];
      if (std::abs(v - std::round(v)) > kIntegralityTol)
        throw std::logic_error("solve_mip: incumbent violates integrality");
    }
    for (int i = 0; i < problem_.base.num_rows(); ++i) {
      double lhs = 0.0;
      for (const auto& [j, v] : problem_.base.rows[i]) lhs += v * sol.x[j];
      const double b = problem_.base.rhs[i];
      const double tol = 1e-6 * (1.0 + std::abs(b));
      const bool ok = problem_.base.row_sense[i] == RowSense::kLe
                          ? lhs <= b + tol
                          : problem_.base.row_sense[i] == RowSense::kGe
                                ? lhs >= b - tol
                                : std::abs(lhs - b) <= tol;
      if (!ok) throw std::logic_error("solve_mip: incumbent violates a row");
    }
    for (const CutRow& cut : pool_)
      if (violated(cut, sol.x))
        throw std::logic_error("solve_mip: incumbent violates a pooled cut");
  }

  MipProblem problem_;
  CutOracle oracle_;
  MipCutHook mip_cut_hook_;
  MipOptions opts_;
  bool maximize_;
  SimplexSolver solver_;
  std::vector<CutRow> pool_;
  long cuts_generated_ = 0;
  long next_creation_ = 0;
  long oracle_calls_ = 0;
  double incumbent_ = 0.0;
  std::vector<double> incumbent_x_;
  BnbNode incumbent_node_;
};

inline MipSolution solve_mip(const MipProblem& problem,
                             CutOracle oracle = nullptr,
                             MipOptions opts = {}) {
  BranchAndBound engine(problem, std::move(oracle), opts);
  return engine.solve();
}

}  // namespace bmpc
