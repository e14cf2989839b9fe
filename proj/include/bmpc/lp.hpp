// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bmpc {

// Bounds at or beyond this magnitude are treated as infinite.
constexpr double kInfBound = 1e20;

inline bool is_finite_bound(double v) { return std::abs(v) < kInfBound; }

enum class Sense { kMin, kMax };
enum class RowSense : char { kLe = 'L', kEq = 'E', kGe = 'G' };
enum class LpStatus { kOptimal, kInfeasible, kUnbounded };

using SparseRow = std::vector<std::pair<int, double>>;

struct LinearProgram {
  Sense sense = Sense::kMin;
  std::vector<double> cost;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<SparseRow> rows;
  std::vector<RowSense> row_sense;
  std::vector<double> rhs;

  int num_vars() const { return static_cast<int>(cost.size()); }
  int num_rows() const { return static_cast<int>(rows.size()); }

  int add_var(double lo, double hi, double obj) {
    cost.push_back(obj);
    lower.push_back(lo);
    upper.push_back(hi);
    return num_vars() - 1;
  }

  int add_row(RowSense s, double b, SparseRow entries) {
    rows.push_back(std::move(entries));
    row_sense.push_back(s);
    rhs.push_back(b);
    return num_rows() - 1;
  }

  void validate() const {
    if (lower.size() != cost.size() || upper.size() != cost.size())
      throw std::invalid_argument("LinearProgram: bound/cost size mismatch");
    if (row_sense.size() != rows.size() || rhs.size() != rows.size())
      throw std::invalid_argument("LinearProgram: row metadata size mismatch");
    for (int j = 0; j < num_vars(); ++j)
      if (lower[j] > upper[j])
        throw std::invalid_argument("LinearProgram: lower > upper for column " +
                                    std::to_string(j));
    for (const auto& row : rows)
      for (const auto& [col, val] : row) {
        if (col < 0 || col >= num_vars())
          throw std::invalid_argument(
              "LinearProgram: column index out of range: " +
              std::to_string(col));
        (void)val;
      }
  }
};

// Basis snapshot for warm starts. Variables are indexed structurals first,
// then one slack per row.
struct Basis {
  std::vector<int> basic;
  std::vector<std::uint8_t> at_upper;
  bool empty() const { return basic.empty(); }
};

struct LpSolution {
  LpStatus status = LpStatus::kOptimal;
  double objective = 0.0;
  std::vector<double> x;
  std::vector<double> duals;
  std::vector<double> reduced_costs;
  Basis basis;
  long iterations = 0;
};

struct CyclingLimitExceeded : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Revised simplex over bounded variables with a dense LU basis and
// product-form updates. One instance owns one problem; the mutating calls
// (bound changes, appended rows) support the branch-and-check access
// pattern where a single hot workspace serves many related solves.
class SimplexSolver {
 public:
  static constexpr double kFeasTol = 1e-7;
  static constexpr double kOptTol = 1e-7;
  static constexpr double kPivotTol = 1e-9;
  static constexpr int kDegenerateLimit = 500;
  static constexpr int kRefactorInterval = 150;

  explicit SimplexSolver(const LinearProgram& lp) : sense_(lp.sense) {
    lp.validate();
    n_ = lp.num_vars();
    m_ = 0;
    const double sign = sense_ == Sense::kMax ? -1.0 : 1.0;
    cols_.resize(n_);
    cost_.assign(n_, 0.0);
    lb_.assign(n_, 0.0);
    ub_.assign(n_, 0.0);
    col_scale_.assign(n_, 1.0);
    base_lower_.assign(n_, 0.0);
    base_upper_.assign(n_, 0.0);
    for (int j = 0; j < n_; ++j) {
      cost_[j] = sign * lp.cost[j];
      lb_[j] = lp.lower[j];
      ub_[j] = lp.upper[j];
    }
    for (int i = 0; i < lp.num_rows(); ++i)
      append_row_raw(lp.rows[i], lp.row_sense[i], lp.rhs[i]);
    compute_scaling();
    apply_scaling();
    base_lower_ = lb_;
    base_upper_ = ub_;
    reset_to_slack_basis();
  }

  int num_structural() const { return n_; }
  int num_rows() const { return m_; }
  long iterations() const { return iterations_; }

  // Tighten or relax a structural variable (original units).
  void set_bounds(int var, double lo, double hi) {
    const double s = col_scale_[var];
    lb_[var] = is_finite_bound(lo) ? lo / s : lo;
    ub_[var] = is_finite_bound(hi) ? hi / s : hi;
    if (vstat_[var] != VarStatus::kBasic) pin_nonbasic(var);
  }

  void reset_bounds() {
    std::copy(base_lower_.begin(), base_lower_.end(), lb_.begin());
    std::copy(base_upper_.begin(), base_upper_.end(), ub_.begin());
    for (int j = 0; j < n_; ++j)
      if (vstat_[j] != VarStatus::kBasic) pin_nonbasic(j);
  }

  // Appends a row; its slack enters the basis, so the factorization is
  // rebuilt lazily on the next solve.
  int add_row(const SparseRow& entries, RowSense sense, double rhs) {
    const int row = append_row_raw(entries, sense, rhs);
    // scale the new row against the existing column scales
    double lo = 1e300, hi = 0.0;
    for (const auto& [j, v] : cols_scratch_) {
      const double a = std::abs(v) * col_scale_[j];
      if (a > 0) { lo = std::min(lo, a); hi = std::max(hi, a); }
    }
    double rs = 1.0;
    if (hi > 0.0) rs = std::exp2(std::round(-0.5 * std::log2(lo * hi)));
    rs = std::clamp(rs, 1.0 / 1048576.0, 1048576.0);
    row_scale_.push_back(rs);
    for (auto& [j, v] : cols_scratch_)
      cols_[j].emplace_back(row, v * rs * col_scale_[j]);
    rhs_.push_back(rhs * rs);
    cols_scratch_.clear();

    const int slack = n_ + row;
    vstat_.push_back(VarStatus::kBasic);
    basic_.push_back(slack);
    x_.push_back(0.0);
    factorized_ = false;
    return row;
  }

  LpStatus solve_primal_from_scratch() {
    reset_to_slack_basis();
    return solve_primal();
  }

  LpStatus solve_primal() {
    ensure_factorized();
    compute_basics();
    const LpStatus phase1 = run_phase1();
    if (phase1 != LpStatus::kOptimal) return phase1;
    return run_phase2();
  }

  // Warm restart after bound changes or appended rows; assumes the resident
  // basis was optimal for a related problem. Falls back to a primal solve
  // if dual feasibility cannot be repaired cheaply.
  LpStatus resolve_dual() {
    ensure_factorized();
    compute_basics();
    if (!repair_dual_feasibility()) return solve_primal();
    long local_iters = 0;
    const long cap = iteration_cap();
    for (;;) {
      if (++local_iters > cap) {
        reset_to_slack_basis();
        return solve_primal();
      }
      const int r = most_violated_row();
      if (r < 0) return LpStatus::kOptimal;
      if (!dual_step(r)) return LpStatus::kInfeasible;
      if (static_cast<int>(etas_.size()) >= kRefactorInterval) {
        factorize();
        compute_basics();
      }
    }
  }

  bool load_basis(const Basis& basis) {
    if (static_cast<int>(basis.basic.size()) != m_ ||
        static_cast<int>(basis.at_upper.size()) != n_ + m_)
      return false;
    for (int j = 0; j < n_ + m_; ++j)
      vstat_[j] = basis.at_upper[j] ? VarStatus::kAtUpper : VarStatus::kAtLower;
    for (int j = 0; j < n_ + m_; ++j)
      if (vstat_[j] == VarStatus::kAtLower && !is_finite_bound(lb(j)))
        vstat_[j] = is_finite_bound(ub(j)) ? VarStatus::kAtUpper
                                           : VarStatus::kFree;
    basic_ = basis.basic;
    for (int i = 0; i < m_; ++i) vstat_[basic_[i]] = VarStatus::kBasic;
    for (int j = 0; j < n_ + m_; ++j)
      if (vstat_[j] != VarStatus::kBasic) pin_nonbasic(j);
    factorized_ = false;
    return true;
  }

  Basis basis() const {
    Basis b;
    b.basic = basic_;
    b.at_upper.assign(n_ + m_, 0);
    for (int j = 0; j < n_ + m_; ++j)
      if (vstat_[j] == VarStatus::kAtUpper) b.at_upper[j] = 1;
    return b;
  }

  double objective() const {
    double obj = 0.0;
    for (int j = 0; j < n_; ++j) obj += cost_[j] * x_[j];
    return sense_ == Sense::kMax ? -obj : obj;
  }

  std::vector<double> primal() const {
    std::vector<double> x(n_);
    for (int j = 0; j < n_; ++j) x[j] = x_[j] * col_scale_[j];
    return x;
  }

  std::vector<double> duals() const {
    Eigen::VectorXd y = dual_vector();
    std::vector<double> out(m_);
    const double sign = sense_ == Sense::kMax ? -1.0 : 1.0;
    for (int i = 0; i < m_; ++i) out[i] = sign * y[i] * row_scale_[i];
    return out;
  }

  std::vector<double> reduced_costs() const {
    Eigen::VectorXd y = dual_vector();
    std::vector<double> out(n_);
    const double sign = sense_ == Sense::kMax ? -1.0 : 1.0;
    for (int j = 0; j < n_; ++j) {
      double d = cost_[j];
      for (const auto& [i, v] : cols_[j]) d -= y[i] * v;
      out[j] = sign * d / col_scale_[j];
    }
    return out;
  }

  // Scaled-space primal value of any variable (slacks included); test hook.
  double value(int var) const { return x_[var]; }

  double max_primal_violation() const {
    double worst = 0.0;
    for (int i = 0; i < m_; ++i) {
      const int j = basic_[i];
      worst = std::max(worst, lb(j) - x_[j]);
      worst = std::max(worst, x_[j] - ub(j));
    }
    return worst;
  }

  LpSolution make_solution(LpStatus status) const {
    LpSolution sol;
    sol.status = status;
    sol.iterations = iterations_;
    if (status == LpStatus::kOptimal) {
      sol.objective = objective();
      sol.x = primal();
      sol.duals = duals();
      sol.reduced_costs = reduced_costs();
      sol.basis = basis();
    }
    return sol;
  }

 private:
  enum class VarStatus : std::uint8_t { kBasic, kAtLower, kAtUpper, kFree };

  double lb(int j) const { return j < n_ ? lb_[j] : slack_lb_[j - n_]; }
  double ub(int j) const { return j < n_ ? ub_[j] : slack_ub_[j - n_]; }

  int append_row_raw(const SparseRow& entries, RowSense sense, double rhs) {
    const int row = m_++;
    cols_scratch_.clear();
    for (const auto& [j, v] : entries) {
      if (j < 0 || j >= n_)
        throw std::invalid_argument("SimplexSolver: row column out of range");
      if (v != 0.0) cols_scratch_.emplace_back(j, v);
    }
    switch (sense) {
      case RowSense::kLe: slack_lb_.push_back(0.0); slack_ub_.push_back(kInfBound); break;
      case RowSense::kGe: slack_lb_.push_back(-kInfBound); slack_ub_.push_back(0.0); break;
      case RowSense::kEq: slack_lb_.push_back(0.0); slack_ub_.push_back(0.0); break;
    }
    if (scaling_ready_) return row;
    // construction path: stash raw entries until global scaling runs
    raw_rows_.push_back(cols_scratch_);
    raw_rhs_.push_back(rhs);
    cols_scratch_.clear();
    return row;
  }

  void compute_scaling() {
    row_scale_.assign(m_, 1.0);
    for (int pass = 0; pass < 2; ++pass) {
      for (int i = 0; i < m_; ++i) {
        double lo = 1e300, hi = 0.0;
        for (const auto& [j, v] : raw_rows_[i]) {
          const double a = std::abs(v) * col_scale_[j] * row_scale_[i];
          if (a > 0) { lo = std::min(lo, a); hi = std::max(hi, a); }
        }
        if (hi > 0.0) {
          double rs = std::exp2(std::round(-0.5 * std::log2(lo * hi)));
          row_scale_[i] = std::clamp(row_scale_[i] * rs, 1.0 / 1048576.0,
                                     1048576.0);
        }
      }
      std::vector<double> col_lo(n_, 1e300), col_hi(n_, 0.0);
      for (int i = 0; i < m_; ++i)
        for (const auto& [j, v] : raw_rows_[i]) {
          const double a = std::abs(v) * col_scale_[j] * row_scale_[i];
          if (a > 0) {
            col_lo[j] = std::min(col_lo[j], a);
            col_hi[j] = std::max(col_hi[j], a);
          }
        }
      for (int j = 0; j < n_; ++j)
        if (col_hi[j] > 0.0) {
          double cs = std::exp2(std::round(-0.5 * std::log2(col_lo[j] * col_hi[j])));
          col_scale_[j] = std::clamp(col_scale_[j] * cs, 1.0 / 1048576.0,
                                     1048576.0);
        }
    }
  }

  void apply_scaling() {
    rhs_.assign(m_, 0.0);
    for (int i = 0; i < m_; ++i) {
      for (const auto& [j, v] : raw_rows_[i])
        cols_[j].emplace_back(i, v * row_scale_[i] * col_scale_[j]);
      rhs_[i] = raw_rhs_[i] * row_scale_[i];
    }
    raw_rows_.clear();
    raw_rhs_.clear();
    for (int j = 0; j < n_; ++j) {
      cost_[j] *= col_scale_[j];
      if (is_finite_bound(lb_[j])) lb_[j] /= col_scale_[j];
      if (is_finite_bound(ub_[j])) ub_[j] /= col_scale_[j];
    }
    scaling_ready_ = true;
  }

  void reset_to_slack_basis() {
    vstat_.assign(n_ + m_, VarStatus::kAtLower);
    x_.assign(n_ + m_, 0.0);
    basic_.resize(m_);
    for (int i = 0; i < m_; ++i) {
      basic_[i] = n_ + i;
      vstat_[n_ + i] = VarStatus::kBasic;
    }
    for (int j = 0; j < n_; ++j) {
      if (is_finite_bound(lb_[j])) vstat_[j] = VarStatus::kAtLower;
      else if (is_finite_bound(ub_[j])) vstat_[j] = VarStatus::kAtUpper;
      else vstat_[j] = VarStatus::kFree;
      pin_nonbasic(j);
    }
    factorized_ = false;
  }

  void pin_nonbasic(int j) {
    switch (vstat_[j]) {
      case VarStatus::kAtLower:
        if (!is_finite_bound(lb(j)))
          vstat_[j] = is_finite_bound(ub(j)) ? VarStatus::kAtUpper
                                             : VarStatus::kFree;
        break;
      case VarStatus::kAtUpper:
        if (!is_finite_bound(ub(j)))
          vstat_[j] = is_finite_bound(lb(j)) ? VarStatus::kAtLower
                                             : VarStatus::kFree;
        break;
      default:
        break;
    }
    x_[j] = nonbasic_value(j);
  }

  double nonbasic_value(int j) const {
    switch (vstat_[j]) {
      case VarStatus::kAtLower: return lb(j);
      case VarStatus::kAtUpper: return ub(j);
      default: return 0.0;
    }
  }

  void ensure_factorized() {
    if (!factorized_) factorize();
  }

  // Bases here are mostly unit slack columns. Factorizing only the kernel
  // (structural basic columns against the rows whose slack is nonbasic)
  // turns the m^3 refactorization into a k^3 one with k << m.
  void factorize() {
    slack_pos_.assign(m_, -1);
    for (int p = 0; p < m_; ++p)
      if (basic_[p] >= n_) slack_pos_[basic_[p] - n_] = p;
    kernel_rows_.clear();
    kernel_cols_.clear();
    row_to_kernel_.assign(m_, -1);
    for (int i = 0; i < m_; ++i)
      if (slack_pos_[i] < 0) {
        row_to_kernel_[i] = static_cast<int>(kernel_rows_.size());
        kernel_rows_.push_back(i);
      }
    kernel_var_.clear();
    for (int p = 0; p < m_; ++p)
      if (basic_[p] < n_) {
        kernel_cols_.push_back(p);
        kernel_var_.push_back(basic_[p]);
      }
    const int k = static_cast<int>(kernel_rows_.size());
    if (static_cast<int>(kernel_cols_.size()) != k)
      throw std::logic_error("SimplexSolver: inconsistent basis structure");
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(k, k);
    for (int c = 0; c < k; ++c)
      for (const auto& [row, v] : cols_[kernel_var_[c]])
        if (row_to_kernel_[row] >= 0) K(row_to_kernel_[row], c) = v;
    kernel_lu_.compute(K);
    etas_.clear();
    factorized_ = true;
  }

  // B x = v; v indexed by row, result by basic position.
  Eigen::VectorXd ftran(Eigen::VectorXd v) const {
    const int k = static_cast<int>(kernel_rows_.size());
    Eigen::VectorXd vr(k);
    for (int r = 0; r < k; ++r) vr[r] = v[kernel_rows_[r]];
    const Eigen::VectorXd xs = kernel_lu_.solve(vr);
    Eigen::VectorXd out(m_);
    for (int c = 0; c < k; ++c) {
      out[kernel_cols_[c]] = xs[c];
      for (const auto& [row, a] : cols_[kernel_var_[c]])
        if (row_to_kernel_[row] < 0) v[row] -= a * xs[c];
    }
    for (int i = 0; i < m_; ++i)
      if (slack_pos_[i] >= 0) out[slack_pos_[i]] = v[i];
    for (const auto& [r, w] : etas_) {
      const double pivot = out[r] / w[r];
      out -= pivot * w;
      out[r] = pivot;
    }
    return out;
  }

  // y^T B = c^T; c indexed by basic position, result by row.
  Eigen::VectorXd btran(Eigen::VectorXd v) const {
    for (auto it = etas_.rbegin(); it != etas_.rend(); ++it) {
      const auto& [r, w] = *it;
      double dot = 0.0;
      for (int i = 0; i < m_; ++i)
        dot += (i == r ? 0.0 : w[i] * v[i]);
      v[r] = (v[r] - dot) / w[r];
    }
    const int k = static_cast<int>(kernel_rows_.size());
    Eigen::VectorXd y(m_);
    for (int i = 0; i < m_; ++i)
      if (slack_pos_[i] >= 0) y[i] = v[slack_pos_[i]];
    Eigen::VectorXd rhs(k);
    for (int c = 0; c < k; ++c) {
      double acc = v[kernel_cols_[c]];
      for (const auto& [row, a] : cols_[kernel_var_[c]])
        if (row_to_kernel_[row] < 0) acc -= a * y[row];
      rhs[c] = acc;
    }
    const Eigen::VectorXd yr = kernel_lu_.transpose().solve(rhs);
    for (int r = 0; r < k; ++r) y[kernel_rows_[r]] = yr[r];
    return y;
  }

  Eigen::VectorXd column_dense(int j) const {
    Eigen::VectorXd a = Eigen::VectorXd::Zero(m_);
    if (j >= n_) a[j - n_] = 1.0;
    else
      for (const auto& [row, v] : cols_[j]) a[row] = v;
    return a;
  }

  void compute_basics() {
    Eigen::VectorXd r = Eigen::Map<const Eigen::VectorXd>(rhs_.data(), m_);
    for (int j = 0; j < n_ + m_; ++j) {
      if (vstat_[j] == VarStatus::kBasic) continue;
      const double v = nonbasic_value(j);
      x_[j] = v;
      if (v == 0.0) continue;
      if (j >= n_) r[j - n_] -= v;
      else
        for (const auto& [row, a] : cols_[j]) r[row] -= a * v;
    }
    const Eigen::VectorXd xb = ftran(std::move(r));
    for (int i = 0; i < m_; ++i) x_[basic_[i]] = xb[i];
  }

  Eigen::VectorXd dual_vector() const {
    Eigen::VectorXd cb(m_);
    for (int i = 0; i < m_; ++i) {
      const int j = basic_[i];
      cb[i] = j < n_ ? cost_[j] : 0.0;
    }
    return btran(std::move(cb));
  }

  long iteration_cap() const { return 20000 + 200L * (n_ + m_); }

  LpStatus run_phase1() {
    long degenerate_streak = 0;
    const long cap = iteration_cap();
    long local = 0;
    for (;;) {
      if (max_primal_violation() <= kFeasTol) return LpStatus::kOptimal;
      if (++local > cap)
        throw CyclingLimitExceeded("simplex phase 1 iteration cap");
      Eigen::VectorXd cb = Eigen::VectorXd::Zero(m_);
      bool any = false;
      for (int i = 0; i < m_; ++i) {
        const int j = basic_[i];
        if (x_[j] < lb(j) - kFeasTol) { cb[i] = -1.0; any = true; }
        else if (x_[j] > ub(j) + kFeasTol) { cb[i] = 1.0; any = true; }
      }
      if (!any) return LpStatus::kOptimal;
      const Eigen::VectorXd y = btran(std::move(cb));
      const int q = price(y, /*phase1=*/true, degenerate_streak > kDegenerateLimit);
      if (q < 0) return LpStatus::kInfeasible;
      const StepOutcome outcome = ratio_and_pivot(q, y, /*phase1=*/true);
      if (outcome == StepOutcome::kUnbounded)
        throw CyclingLimitExceeded("simplex phase 1 reported unbounded");
      degenerate_streak =
          outcome == StepOutcome::kDegenerate ? degenerate_streak + 1 : 0;
    }
  }

  LpStatus run_phase2() {
    long degenerate_streak = 0;
    const long cap = iteration_cap();
    long local = 0;
    for (;;) {
      if (++local > cap)
        throw CyclingLimitExceeded("simplex phase 2 iteration cap");
      const Eigen::VectorXd y = dual_vector();
      const int q = price(y, /*phase1=*/false, degenerate_streak > kDegenerateLimit);
      if (q < 0) return LpStatus::kOptimal;
      const StepOutcome outcome = ratio_and_pivot(q, y, /*phase1=*/false);
      if (outcome == StepOutcome::kUnbounded) return LpStatus::kUnbounded;
      degenerate_streak =
          outcome == StepOutcome::kDegenerate ? degenerate_streak + 1 : 0;
    }
  }

  double reduced_cost(int j, const Eigen::VectorXd& y, bool phase1) const {
    double d = phase1 ? 0.0 : (j < n_ ? cost_[j] : 0.0);
    if (j >= n_) d -= y[j - n_];
    else
      for (const auto& [row, v] : cols_[j]) d -= y[row] * v;
    return d;
  }

  // Dantzig pricing (Bland's rule when requested). Returns the entering
  // variable or -1 when no candidate passes the optimality tolerance.
  int price(const Eigen::VectorXd& y, bool phase1, bool bland) {
    int best = -1;
    double best_score = kOptTol;
    for (int j = 0; j < n_ + m_; ++j) {
      const VarStatus st = vstat_[j];
      if (st == VarStatus::kBasic) continue;
      if (lb(j) == ub(j)) continue;  // fixed
      const double d = reduced_cost(j, y, phase1);
      double score = 0.0;
      bool increase = false;
      if ((st == VarStatus::kAtLower || st == VarStatus::kFree) && d < -kOptTol) {
        score = -d;
        increase = true;
      } else if ((st == VarStatus::kAtUpper || st == VarStatus::kFree) &&
                 d > kOptTol) {
        score = d;
        increase = false;
      } else {
        continue;
      }
      if (bland) { enter_increase_ = increase; return j; }
      if (score > best_score) {
        best_score = score;
        best = j;
        enter_increase_ = increase;
      }
    }
    return best;
  }

  enum class StepOutcome { kPivot, kFlip, kDegenerate, kUnbounded };

  StepOutcome ratio_and_pivot(int q, const Eigen::VectorXd&, bool phase1) {
    ++iterations_;
    const double dir = enter_increase_ ? 1.0 : -1.0;
    const Eigen::VectorXd w = ftran(column_dense(q));

    double t_flip = kInfBound;
    if (is_finite_bound(lb(q)) && is_finite_bound(ub(q)))
      t_flip = ub(q) - lb(q);

    double t_min = t_flip;
    int leave = -1;
    double leave_abs_w = 0.0;
    int leave_side = 0;  // -1 lower, +1 upper
    for (int i = 0; i < m_; ++i) {
      const double wi = w[i];
      if (std::abs(wi) <= kPivotTol) continue;
      const int j = basic_[i];
      const double xi = x_[j];
      const double rate = -dir * wi;
      double bp = -1.0;
      int side = 0;
      if (rate > 0.0) {
        if (phase1 && xi < lb(j) - kFeasTol) { bp = (lb(j) - xi) / rate; side = -1; }
        else if (is_finite_bound(ub(j)) && xi <= ub(j) + kFeasTol) {
          bp = std::max(0.0, (ub(j) - xi) / rate);
          side = 1;
        }
      } else {
        if (phase1 && xi > ub(j) + kFeasTol) { bp = (ub(j) - xi) / rate; side = 1; }
        else if (is_finite_bound(lb(j)) && xi >= lb(j) - kFeasTol) {
          bp = std::max(0.0, (lb(j) - xi) / rate);
          side = -1;
        }
      }
      if (side == 0 || bp < 0.0) continue;
      if (bp < t_min - 1e-12 ||
          (bp < t_min + 1e-12 && std::abs(wi) > leave_abs_w)) {
        t_min = bp;
        leave = i;
        leave_abs_w = std::abs(wi);
        leave_side = side;
      }
    }

    if (leave < 0) {
      if (!is_finite_bound(t_flip)) return StepOutcome::kUnbounded;
      // bound flip
      for (int i = 0; i < m_; ++i) x_[basic_[i]] -= dir * t_flip * w[i];
      vstat_[q] = enter_increase_ ? VarStatus::kAtUpper : VarStatus::kAtLower;
      x_[q] = nonbasic_value(q);
      return t_flip <= 1e-11 ? StepOutcome::kDegenerate : StepOutcome::kFlip;
    }

    const double t = t_min;
    for (int i = 0; i < m_; ++i) x_[basic_[i]] -= dir * t * w[i];
    x_[q] += dir * t;
    const int out_var = basic_[leave];
    vstat_[out_var] = leave_side < 0 ? VarStatus::kAtLower : VarStatus::kAtUpper;
    x_[out_var] = nonbasic_value(out_var);
    basic_[leave] = q;
    vstat_[q] = VarStatus::kBasic;
    etas_.emplace_back(leave, w);
    if (static_cast<int>(etas_.size()) >= kRefactorInterval) {
      factorize();
      compute_basics();
    }
    return t <= 1e-11 ? StepOutcome::kDegenerate : StepOutcome::kPivot;
  }

  // Flip nonbasic variables whose reduced cost has the wrong sign; returns
  // false when a flip is impossible (a free or one-sided column), in which
  // case the caller reverts to the primal path.
  bool repair_dual_feasibility() {
    const Eigen::VectorXd y = dual_vector();
    bool changed = false;
    for (int j = 0; j < n_ + m_; ++j) {
      if (vstat_[j] == VarStatus::kBasic || lb(j) == ub(j)) continue;
      const double d = reduced_cost(j, y, false);
      if (vstat_[j] == VarStatus::kAtLower && d < -kOptTol) {
        if (!is_finite_bound(ub(j))) return false;
        vstat_[j] = VarStatus::kAtUpper;
        changed = true;
      } else if (vstat_[j] == VarStatus::kAtUpper && d > kOptTol) {
        if (!is_finite_bound(lb(j))) return false;
        vstat_[j] = VarStatus::kAtLower;
        changed = true;
      } else if (vstat_[j] == VarStatus::kFree && std::abs(d) > kOptTol) {
        return false;
      }
    }
    if (changed) compute_basics();
    return true;
  }

  int most_violated_row() const {
    int worst = -1;
    double worst_v = kFeasTol;
    for (int i = 0; i < m_; ++i) {
      const int j = basic_[i];
      const double v = std::max(lb(j) - x_[j], x_[j] - ub(j));
      if (v > worst_v) { worst_v = v; worst = i; }
    }
    return worst;
  }

  // One dual simplex pivot on basic row r; returns false on dual
  // unboundedness (primal infeasible).
  bool dual_step(int r) {
    ++iterations_;
    const int out_var = basic_[r];
    const bool below = x_[out_var] < lb(out_var);
    Eigen::VectorXd e = Eigen::VectorXd::Zero(m_);
    e[r] = 1.0;
    const Eigen::VectorXd rho = btran(std::move(e));
    const Eigen::VectorXd y = dual_vector();

    int q = -1;
    double best_ratio = 0.0;
    double best_alpha = 0.0;
    for (int j = 0; j < n_ + m_; ++j) {
      if (vstat_[j] == VarStatus::kBasic || lb(j) == ub(j)) continue;
      double alpha = 0.0;
      if (j >= n_) alpha = rho[j - n_];
      else
        for (const auto& [row, v] : cols_[j]) alpha += rho[row] * v;
      if (std::abs(alpha) <= kPivotTol) continue;
      // eligibility: moving j in its admissible direction must push x_r
      // toward the violated bound
      bool ok = false;
      if (below) {
        ok = (vstat_[j] == VarStatus::kAtLower && alpha < 0.0) ||
             (vstat_[j] == VarStatus::kAtUpper && alpha > 0.0) ||
             vstat_[j] == VarStatus::kFree;
      } else {
        ok = (vstat_[j] == VarStatus::kAtLower && alpha > 0.0) ||
             (vstat_[j] == VarStatus::kAtUpper && alpha < 0.0) ||
             vstat_[j] == VarStatus::kFree;
      }
      if (!ok) continue;
      const double d = reduced_cost(j, y, false);
      const double ratio = std::abs(d) / std::abs(alpha);
      if (q < 0 || ratio < best_ratio - 1e-12 ||
          (ratio < best_ratio + 1e-12 && std::abs(alpha) > std::abs(best_alpha))) {
        q = j;
        best_ratio = ratio;
        best_alpha = alpha;
      }
    }
    if (q < 0) return false;

    const double target = below ? lb(out_var) : ub(out_var);
    const Eigen::VectorXd w = ftran(column_dense(q));
    const double delta = (x_[out_var] - target) / w[r];
    for (int i = 0; i < m_; ++i) x_[basic_[i]] -= delta * w[i];
    x_[q] += delta;
    vstat_[out_var] = below ? VarStatus::kAtLower : VarStatus::kAtUpper;
    x_[out_var] = target;
    basic_[r] = q;
    vstat_[q] = VarStatus::kBasic;
    etas_.emplace_back(r, w);
    return true;
  }

  Sense sense_;
  int n_ = 0;
  int m_ = 0;
  std::vector<SparseRow> cols_;
  std::vector<double> cost_, lb_, ub_;
  std::vector<double> base_lower_, base_upper_;
  std::vector<double> slack_lb_, slack_ub_;
  std::vector<double> rhs_;
  std::vector<double> row_scale_, col_scale_;
  std::vector<SparseRow> raw_rows_;
  std::vector<double> raw_rhs_;
  SparseRow cols_scratch_;
  bool scaling_ready_ = false;

  std::vector<VarStatus> vstat_;
  std::vector<int> basic_;
  std::vector<double> x_;
  Eigen::PartialPivLU<Eigen::MatrixXd> kernel_lu_;
  std::vector<int> slack_pos_, kernel_rows_, kernel_cols_, kernel_var_,
      row_to_kernel_;
  std::vector<std::pair<int, Eigen::VectorXd>> etas_;
  bool factorized_ = false;
  bool enter_increase_ = true;
  long iterations_ = 0;
};

inline LpSolution solve_lp(const LinearProgram& lp,
                           const Basis* warm_basis = nullptr) {
  SimplexSolver solver(lp);
  LpStatus status;
  if (warm_basis && !warm_basis->empty() && solver.load_basis(*warm_basis))
    status = solver.solve_primal();
  else
    status = solver.solve_primal_from_scratch();
  return solver.make_solution(status);
}

struct InfeasibleAfterCut : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Re-optimizes lp with appended rows, dual-simplex restarting from the
// basis of `prior` when it is available.
inline LpSolution reoptimize_with_rows(
    const LinearProgram& lp, const std::vector<SparseRow>& new_rows,
    const std::vector<RowSense>& new_senses, const std::vector<double>& new_rhs,
    const LpSolution& prior) {
  if (new_rows.size() != new_senses.size() || new_rows.size() != new_rhs.size())
    throw std::invalid_argument("reoptimize_with_rows: row arrays mismatch");
  SimplexSolver solver(lp);
  const bool warm = !prior.basis.empty() && solver.load_basis(prior.basis);
  for (std::size_t i = 0; i < new_rows.size(); ++i)
    solver.add_row(new_rows[i], new_senses[i], new_rhs[i]);
  const LpStatus status = warm ? solver.resolve_dual()
                               : solver.solve_primal_from_scratch();
  if (status == LpStatus::kInfeasible)
    throw InfeasibleAfterCut("appended rows exclude the feasible region");
  return solver.make_solution(status);
}

// Fixed-point MPS-like dump for eyeballing an LP against external tools.
inline void write_mps(const LinearProgram& lp, std::ostream& os,
                      const std::string& name = "BMPC") {
  os << "NAME          " << name << "\n";
  os << "ROWS\n " << (lp.sense == Sense::kMax ? "N  MAXOBJ" : "N  OBJ") << "\n";
  for (int i = 0; i < lp.num_rows(); ++i)
    os << " " << static_cast<char>(lp.row_sense[i]) << "  R" << i << "\n";
  os << "COLUMNS\n" << std::fixed << std::setprecision(12);
  std::vector<SparseRow> cols(lp.num_vars());
  for (int i = 0; i < lp.num_rows(); ++i)
    for (const auto& [j, v] : lp.rows[i]) cols[j].emplace_back(i, v);
  for (int j = 0; j < lp.num_vars(); ++j) {
    if (lp.cost[j] != 0.0)
      os << "    C" << j << "  OBJ  " << lp.cost[j] << "\n";
    for (const auto& [i, v] : cols[j])
      os << "    C" << j << "  R" << i << "  " << v << "\n";
  }
  os << "RHS\n";
  for (int i = 0; i < lp.num_rows(); ++i)
    if (lp.rhs[i] != 0.0) os << "    RHS  R" << i << "  " << lp.rhs[i] << "\n";
  os << "BOUNDS\n";
  for (int j = 0; j < lp.num_vars(); ++j) {
    if (is_finite_bound(lp.lower[j]) && lp.lower[j] != 0.0)
      os << " LO BND  C" << j << "  " << lp.lower[j] << "\n";
    else if (!is_finite_bound(lp.lower[j]))
      os << " MI BND  C" << j << "\n";
    if (is_finite_bound(lp.upper[j]))
      os << " UP BND  C" << j << "  " << lp.upper[j] << "\n";
  }
  os << "ENDATA\n";
}

}  // namespace bmpc
