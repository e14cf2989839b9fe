// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "bmpc/collocation.hpp"
#include "bmpc/mip.hpp"
#include "bmpc/reactor.hpp"
#include "bmpc/threads.hpp"
#include "bmpc/transition.hpp"

namespace bmpc {

struct ProductSpec {
  double demand = 0.0;           // d, mol
  double demand_change = 0.0;    // half-width of the demand disturbance, mol
  double price = 0.0;            // $/mol
  double operating_cost = 0.0;   // $/mol
  double production_rate = 0.0;  // mol/hr
  double steady_flow = 0.0;      // F_ss, L/hr
  double steady_conc = 0.0;      // c_ss, mol/L (recomputed from F_ss on load)
};

// Case-study instance: the plant, the product slate, economics, the horizon
// and the reactor state at the disturbance time. prepare_instance() fills
// the derived fields (steady concentrations, minimum transition times and
// the master's cost caps).
struct ScheduleInstance {
  Plant plant;
  std::vector<ProductSpec> products;
  double horizon = 30.0;  // H, hr
  double t0 = 0.0;        // disturbance time, hr
  double x0 = 0.0;        // reactor concentration at t0, mol/L
  std::vector<double> initial_inventory;           // I0, mol
  double inventory_cost = 0.0026;                  // C_inv, $/mol
  double alpha_u = 1.0;
  std::vector<std::vector<double>> fixed_transition_cost;  // C_tr, $
  int n_fe = 10;
  int n_c = 3;

  // derived (prepare_instance / refresh_initial_state)
  bool pairs_prepared = false;
  bool prepared = false;
  std::vector<std::vector<double>> theta_min;        // continuous bang-bang, hr
  std::vector<std::vector<double>> theta_min_model;  // discretization-feasible
  std::vector<double> theta_hat_min;                 // x0 -> product, hr
  std::vector<double> theta_hat_min_model;
  std::vector<std::vector<double>> cost_cap;  // eta upper bounds, $
  std::vector<double> cost_cap_initial;

  int num_products() const { return static_cast<int>(products.size()); }
  int num_slots() const { return num_products(); }

  CollocationGrid grid() const { return make_grid(n_fe, n_c); }

  void validate() const {
    if (products.empty())
      throw std::invalid_argument("ScheduleInstance: no products");
    if (!(t0 >= 0.0 && t0 < horizon))
      throw std::invalid_argument("ScheduleInstance: need 0 <= T0 < H");
    if (x0 < 0.0 || x0 > plant.feed_conc)
      throw std::invalid_argument("ScheduleInstance: x0 outside [0, c_feed]");
    if (initial_inventory.size() != products.size())
      throw std::invalid_argument("ScheduleInstance: I0 size mismatch");
    for (const auto& p : products)
      if (p.production_rate <= 0.0)
        throw std::invalid_argument("ScheduleInstance: production rate <= 0");
  }
};

inline TransitionNlp pair_transition_nlp(const ScheduleInstance& inst, int i,
                                         int j, double theta) {
  return build_transition_nlp(inst.products[i].steady_conc,
                              inst.products[j].steady_conc,
                              inst.products[j].steady_flow, theta, inst.grid(),
                              inst.plant, inst.alpha_u);
}

inline TransitionNlp initial_transition_nlp(const ScheduleInstance& inst,
                                            int product, double theta_hat) {
  return build_transition_nlp(inst.x0, inst.products[product].steady_conc,
                              inst.products[product].steady_flow, theta_hat,
                              inst.grid(), inst.plant, inst.alpha_u);
}

namespace detail {

// Cost cap for the master's value variables: twice the value function near
// its minimum transition time, extrapolated through the anchor slope. Falls
// back to the coarse analytic bound when the tight solve fails.
inline double value_cap(const TransitionNlp& base, double theta_min,
                        const Plant& plant, double alpha_u, double u_target) {
  const double delta_max =
      std::max(plant.flow_hi - u_target, u_target - plant.flow_lo);
  const double coarse =
      alpha_u * 2.5 * std::max(theta_min, 1e-3) * delta_max * delta_max;
  if (theta_min < 1e-9) return 1.0;
  for (double factor : {1.02, 1.1}) {
    TransitionNlp probe = base;
    probe.theta = factor * theta_min;
    try {
      const TransitionResult r = solve_transition(probe);
      if (r.converged)
        return 2.0 * (r.cost +
                      r.multiplier * (factor - 1.0 + 0.02) * theta_min);
    } catch (const InfeasibleTheta&) {
      continue;
    }
  }
  return coarse;
}

}  // namespace detail

// Prepares the pair-transition data: steady concentrations, the continuous
// and discretization-feasible minimum times and the master cost caps. The
// pair fields do not depend on the disturbance state, so they are computed
// once per product set.
inline void prepare_pairs(ScheduleInstance& inst) {
  inst.validate();
  const int n = inst.num_products();
  for (auto& p : inst.products)
    p.steady_conc = steady_state_concentration(inst.plant, p.steady_flow);
  if (inst.fixed_transition_cost.empty())
    inst.fixed_transition_cost.assign(n, std::vector<double>(n, 0.0));

  inst.theta_min.assign(n, std::vector<double>(n, 0.0));
  inst.theta_min_model.assign(n, std::vector<double>(n, 0.0));
  inst.cost_cap.assign(n, std::vector<double>(n, 1.0));

  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) pairs.emplace_back(i, j);
  const CollocationGrid grid = inst.grid();
  parallel_for(pairs.size(), [&](std::size_t idx) {
    const auto [i, j] = pairs[idx];
    const double from = inst.products[i].steady_conc;
    const double to = inst.products[j].steady_conc;
    const double flow = inst.products[j].steady_flow;
    const double tmin =
        from == to ? 0.0 : min_transition_time(inst.plant, from, to);
    inst.theta_min[i][j] = tmin;
    inst.theta_min_model[i][j] = min_feasible_theta(
        inst.plant, grid, inst.alpha_u, from, to, flow, tmin);
    const double anchor = std::max(inst.theta_min_model[i][j], 1e-3);
    inst.cost_cap[i][j] =
        detail::value_cap(pair_transition_nlp(inst, i, j, anchor),
                          inst.theta_min_model[i][j], inst.plant, inst.alpha_u,
                          flow);
  });
  inst.pairs_prepared = true;
}

// Recomputes the fields that depend on the disturbance state x0: initial
// minimum transition times (continuous and model) and their cost caps.
inline void refresh_initial_state(ScheduleInstance& inst) {
  if (!inst.pairs_prepared)
    throw std::logic_error("refresh_initial_state: pairs not prepared");
  const int n = inst.num_products();
  inst.theta_hat_min.assign(n, 0.0);
  inst.theta_hat_min_model.assign(n, 0.0);
  inst.cost_cap_initial.assign(n, 1.0);
  const CollocationGrid grid = inst.grid();
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    const double target = inst.products[i].steady_conc;
    const double flow = inst.products[i].steady_flow;
    const double tmin =
        inst.x0 == target ? 0.0
                          : min_transition_time(inst.plant, inst.x0, target);
    inst.theta_hat_min[i] = tmin;
    inst.theta_hat_min_model[i] = min_feasible_theta(
        inst.plant, grid, inst.alpha_u, inst.x0, target, flow, tmin);
    // the sampling window is capped at twice the continuous minimum
    inst.theta_hat_min_model[i] =
        std::min(inst.theta_hat_min_model[i], 2.0 * std::max(tmin, 1e-12));
    const double anchor = std::max(inst.theta_hat_min_model[i], 1e-3);
    inst.cost_cap_initial[i] = detail::value_cap(
        initial_transition_nlp(inst, static_cast<int>(i), anchor),
        inst.theta_hat_min_model[i], inst.plant, inst.alpha_u, flow);
  });
  inst.prepared = true;
}

inline void prepare_instance(ScheduleInstance& inst) {
  prepare_pairs(inst);
  refresh_initial_state(inst);
}

// Deterministic column layout of the master problem.
class MasterIndexMap {
 public:
  explicit MasterIndexMap(int n) : n_(n), pairs_(n * (n - 1)) {
    int at = 0;
    assign_ = at; at += n_ * n_;
    trans_ind_ = at; at += pairs_ * n_;
    first_ind_ = at; at += n_;
    prod_time_ = at; at += n_ * n_;
    trans_time_ = at; at += pairs_ * n_;
    init_time_ = at; at += n_;
    slot_start_ = at; at += n_;
    slot_end_ = at; at += n_;
    quantity_ = at; at += n_ * n_;
    inventory_ = at; at += n_ * n_;
    sales_ = at; at += n_ * n_;
    trans_cost_ = at; at += pairs_ * n_;
    init_cost_ = at; at += n_;
    lin_trans_time_ = at; at += pairs_ * n_;
    lin_init_time_ = at; at += n_;
    lin_trans_cost_ = at; at += pairs_ * n_;
    lin_init_cost_ = at; at += n_;
    total_ = at;
  }

  int num_cols() const { return total_; }
  int num_products() const { return n_; }

  // binaries
  int assign(int i, int k) const { return assign_ + i * n_ + k; }
  int trans_ind(int i, int j, int k) const {
    return trans_ind_ + k * pairs_ + pair(i, j);
  }
  int first_ind(int i) const { return first_ind_ + i; }

  // continuous scheduling variables
  int prod_time(int i, int k) const { return prod_time_ + i * n_ + k; }
  int trans_time(int i, int j, int k) const {
    return trans_time_ + k * pairs_ + pair(i, j);
  }
  int init_time(int i) const { return init_time_ + i; }
  int slot_start(int k) const { return slot_start_ + k; }
  int slot_end(int k) const { return slot_end_ + k; }
  int quantity(int i, int k) const { return quantity_ + i * n_ + k; }
  int inventory(int i, int k) const { return inventory_ + i * n_ + k; }
  int sales(int i, int k) const { return sales_ + i * n_ + k; }

  // value-function epigraph variables and linearization products
  int trans_cost(int i, int j, int k) const {
    return trans_cost_ + k * pairs_ + pair(i, j);
  }
  int init_cost(int i) const { return init_cost_ + i; }
  int lin_trans_time(int i, int j, int k) const {
    return lin_trans_time_ + k * pairs_ + pair(i, j);
  }
  int lin_init_time(int i) const { return lin_init_time_ + i; }
  int lin_trans_cost(int i, int j, int k) const {
    return lin_trans_cost_ + k * pairs_ + pair(i, j);
  }
  int lin_init_cost(int i) const { return lin_init_cost_ + i; }

  template <typename Fn>
  void for_each_pair(Fn&& fn) const {
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j)
        if (i != j) fn(i, j);
  }

 private:
  int pair(int i, int j) const { return i * (n_ - 1) + (j < i ? j : j - 1); }

  int n_, pairs_;
  int assign_, trans_ind_, first_ind_, prod_time_, trans_time_, init_time_;
  int slot_start_, slot_end_, quantity_, inventory_, sales_;
  int trans_cost_, init_cost_;
  int lin_trans_time_, lin_init_time_, lin_trans_cost_, lin_init_cost_;
  int total_;
};

// Affine underestimator of a transition value function at one anchor:
// eta >= value - slope * (theta - anchor).
struct BendersCut {
  enum class Target { kPair, kInitial };
  static constexpr int kAllSlots = -1;

  Target target = Target::kPair;
  int from = -1;
  int to = -1;    // initial cuts use `to` as the product
  int slot = 0;   // pair cuts: slot index, or kAllSlots for replication
  double anchor = 0.0;
  double value = 0.0;
  double slope = 0.0;
  bool from_surrogate = false;
  double anchor_state = 0.0;  // x0 carried by initial-transition cuts
};

// Builds the linearized master MIP in max form. Bilinear schedule terms
// (indicator * time, indicator * cost) enter through their linearization
// columns, exact for binary indicators. Cuts append rows over the
// (cost, time) columns of their target.
inline std::pair<MipProblem, MasterIndexMap> build_master(
    const ScheduleInstance& inst, const std::vector<BendersCut>& cuts = {}) {
  if (!inst.prepared)
    throw std::logic_error("build_master: instance not prepared");
  const int n = inst.num_products();
  const MasterIndexMap map(n);
  const double window = inst.horizon - inst.t0;

  MipProblem mip;
  LinearProgram& lp = mip.base;
  lp.sense = Sense::kMax;
  lp.cost.assign(map.num_cols(), 0.0);
  lp.lower.assign(map.num_cols(), 0.0);
  lp.upper.assign(map.num_cols(), 0.0);

  auto set_bounds = [&](int col, double lo, double hi) {
    lp.lower[col] = lo;
    lp.upper[col] = hi;
  };

  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < n; ++k) {
      set_bounds(map.assign(i, k), 0.0, 1.0);
      mip.integrality.push_back(map.assign(i, k));
      set_bounds(map.prod_time(i, k), 0.0, inst.horizon);
      set_bounds(map.quantity(i, k), 0.0, kInfBound);
      set_bounds(map.inventory(i, k), 0.0, kInfBound);
      set_bounds(map.sales(i, k), 0.0, kInfBound);
      lp.cost[map.quantity(i, k)] = -inst.products[i].operating_cost;
      lp.cost[map.inventory(i, k)] = -inst.inventory_cost;
      lp.cost[map.sales(i, k)] = inst.products[i].price;
    }
    set_bounds(map.first_ind(i), 0.0, 1.0);
    mip.integrality.push_back(map.first_ind(i));
    const double th_lo = inst.theta_hat_min_model[i];
    const double th_hi =
        std::max(2.0 * inst.theta_hat_min[i], inst.theta_hat_min_model[i]);
    set_bounds(map.init_time(i), th_lo, th_hi);
    set_bounds(map.lin_init_time(i), 0.0, th_hi);
    set_bounds(map.init_cost(i), 0.0, inst.cost_cap_initial[i]);
    set_bounds(map.lin_init_cost(i), 0.0, inst.cost_cap_initial[i]);
    lp.cost[map.lin_init_cost(i)] = -1.0;
  }
  for (int k = 0; k < n; ++k) {
    set_bounds(map.slot_start(k), 0.0, inst.horizon);
    set_bounds(map.slot_end(k), 0.0, inst.horizon);
  }
  set_bounds(map.slot_start(0), 0.0, 0.0);
  set_bounds(map.slot_end(n - 1), window, window);

  map.for_each_pair([&](int i, int j) {
    const double t_lo = inst.theta_min_model[i][j];
    const double t_hi =
        std::max(5.0 * inst.theta_min[i][j], inst.theta_min_model[i][j]);
    const double cap = inst.cost_cap[i][j];
    for (int k = 0; k < n; ++k) {
      set_bounds(map.trans_ind(i, j, k), 0.0, 1.0);
      mip.integrality.push_back(map.trans_ind(i, j, k));
      set_bounds(map.trans_time(i, j, k), t_lo, t_hi);
      set_bounds(map.lin_trans_time(i, j, k), 0.0, t_hi);
      set_bounds(map.trans_cost(i, j, k), 0.0, cap);
      set_bounds(map.lin_trans_cost(i, j, k), 0.0, cap);
      lp.cost[map.lin_trans_cost(i, j, k)] = -1.0;
      lp.cost[map.trans_ind(i, j, k)] = -inst.fixed_transition_cost[i][j];
    }
  });

  // assignment rows
  for (int i = 0; i < n; ++i) {
    SparseRow row;
    for (int k = 0; k < n; ++k) row.emplace_back(map.assign(i, k), 1.0);
    lp.add_row(RowSense::kEq, 1.0, std::move(row));
  }
  for (int k = 0; k < n; ++k) {
    SparseRow row;
    for (int i = 0; i < n; ++i) row.emplace_back(map.assign(i, k), 1.0);
    lp.add_row(RowSense::kEq, 1.0, std::move(row));
  }

  // transition linking and first-slot identity
  map.for_each_pair([&](int i, int j) {
    for (int k = 0; k + 1 < n; ++k)
      lp.add_row(RowSense::kLe, 1.0,
                 {{map.assign(i, k), 1.0},
                  {map.assign(j, k + 1), 1.0},
                  {map.trans_ind(i, j, k), -1.0}});
  });
  for (int i = 0; i < n; ++i)
    lp.add_row(RowSense::kEq, 0.0,
               {{map.first_ind(i), 1.0}, {map.assign(i, 0), -1.0}});

  // timing: slot end = slot start + production + transition span
  for (int k = 0; k < n; ++k) {
    SparseRow row{{map.slot_end(k), 1.0}, {map.slot_start(k), -1.0}};
    for (int i = 0; i < n; ++i) row.emplace_back(map.prod_time(i, k), -1.0);
    map.for_each_pair([&](int i, int j) {
      row.emplace_back(map.lin_trans_time(i, j, k), -1.0);
    });
    if (k == 0)
      for (int i = 0; i < n; ++i)
        row.emplace_back(map.lin_init_time(i), -1.0);
    lp.add_row(RowSense::kEq, 0.0, std::move(row));
  }
  for (int k = 0; k + 1 < n; ++k)
    lp.add_row(RowSense::kEq, 0.0,
               {{map.slot_start(k + 1), 1.0}, {map.slot_end(k), -1.0}});
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k)
      lp.add_row(RowSense::kLe, 0.0,
                 {{map.prod_time(i, k), 1.0},
                  {map.assign(i, k), -inst.horizon}});

  // linearization of indicator * time and indicator * cost
  auto glover = [&](int lin, int scalar, int indicator, double ub) {
    lp.add_row(RowSense::kLe, 0.0, {{lin, 1.0}, {indicator, -ub}});
    lp.add_row(RowSense::kLe, 0.0, {{lin, 1.0}, {scalar, -1.0}});
    lp.add_row(RowSense::kLe, ub,
               {{scalar, 1.0}, {lin, -1.0}, {indicator, ub}});
  };
  map.for_each_pair([&](int i, int j) {
    const double t_hi =
        std::max(5.0 * inst.theta_min[i][j], inst.theta_min_model[i][j]);
    for (int k = 0; k < n; ++k) {
      glover(map.lin_trans_time(i, j, k), map.trans_time(i, j, k),
             map.trans_ind(i, j, k), t_hi);
      glover(map.lin_trans_cost(i, j, k), map.trans_cost(i, j, k),
             map.trans_ind(i, j, k), inst.cost_cap[i][j]);
    }
  });
  for (int i = 0; i < n; ++i) {
    glover(map.lin_init_time(i), map.init_time(i), map.first_ind(i),
           std::max(2.0 * inst.theta_hat_min[i], inst.theta_hat_min_model[i]));
    glover(map.lin_init_cost(i), map.init_cost(i), map.first_ind(i),
           inst.cost_cap_initial[i]);
  }

  // production, inventory balance, demand due at the final slot
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < n; ++k)
      lp.add_row(RowSense::kEq, 0.0,
                 {{map.quantity(i, k), 1.0},
                  {map.prod_time(i, k), -inst.products[i].production_rate}});
    lp.add_row(RowSense::kEq, inst.initial_inventory[i],
               {{map.inventory(i, 0), 1.0},
                {map.quantity(i, 0), -1.0},
                {map.sales(i, 0), 1.0}});
    for (int k = 1; k < n; ++k)
      lp.add_row(RowSense::kEq, 0.0,
                 {{map.inventory(i, k), 1.0},
                  {map.inventory(i, k - 1), -1.0},
                  {map.quantity(i, k), -1.0},
                  {map.sales(i, k), 1.0}});
    lp.add_row(RowSense::kGe, inst.products[i].demand,
               {{map.sales(i, n - 1), 1.0}});
  }

  // value-function cuts
  for (const BendersCut& cut : cuts) {
    if (cut.target == BendersCut::Target::kInitial) {
      lp.add_row(RowSense::kGe, cut.value + cut.slope * cut.anchor,
                 {{map.init_cost(cut.to), 1.0},
                  {map.init_time(cut.to), cut.slope}});
    } else if (cut.slot == BendersCut::kAllSlots) {
      for (int k = 0; k < n; ++k)
        lp.add_row(RowSense::kGe, cut.value + cut.slope * cut.anchor,
                   {{map.trans_cost(cut.from, cut.to, k), 1.0},
                    {map.trans_time(cut.from, cut.to, k), cut.slope}});
    } else {
      lp.add_row(RowSense::kGe, cut.value + cut.slope * cut.anchor,
                 {{map.trans_cost(cut.from, cut.to, cut.slot), 1.0},
                  {map.trans_time(cut.from, cut.to, cut.slot), cut.slope}});
    }
  }

  return {std::move(mip), map};
}

// Turns a cut into the engine's row form for lazy application.
inline CutRow cut_to_row(const BendersCut& cut, const MasterIndexMap& map,
                         int slot) {
  CutRow row;
  row.sense = RowSense::kGe;
  row.rhs = cut.value + cut.slope * cut.anchor;
  if (cut.target == BendersCut::Target::kInitial)
    row.coeffs = {{map.init_cost(cut.to), 1.0},
                  {map.init_time(cut.to), cut.slope}};
  else
    row.coeffs = {{map.trans_cost(cut.from, cut.to, slot), 1.0},
                  {map.trans_time(cut.from, cut.to, slot), cut.slope}};
  return row;
}

struct FeasibilityCertificate {
  bool feasible = false;
  std::vector<int> sequence;  // product per slot
  int first_product = -1;
  double production_time = 0.0;  // sum d_i / r_i
  double transition_time = 0.0;  // minimized total transition time
  double available = 0.0;        // H - T0
};

namespace detail {

// Assignment MILP minimizing the total transition time for given minimum
// pair times and initial times; returns the optimum and its sequence.
struct MinTransition {
  double total = 0.0;
  std::vector<int> sequence;
};

inline MinTransition min_transition_assignment(
    int n, const std::vector<std::vector<double>>& pair_min,
    const std::vector<double>& initial_min) {
  const MasterIndexMap map(n);
  MipProblem mip;
  LinearProgram& lp = mip.base;
  lp.sense = Sense::kMin;
  lp.cost.assign(map.num_cols(), 0.0);
  lp.lower.assign(map.num_cols(), 0.0);
  lp.upper.assign(map.num_cols(), 0.0);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < n; ++k) {
      lp.upper[map.assign(i, k)] = 1.0;
      mip.integrality.push_back(map.assign(i, k));
    }
    lp.upper[map.first_ind(i)] = 1.0;
    mip.integrality.push_back(map.first_ind(i));
    lp.cost[map.first_ind(i)] = initial_min[i];
  }
  map.for_each_pair([&](int i, int j) {
    for (int k = 0; k < n; ++k) {
      lp.upper[map.trans_ind(i, j, k)] = 1.0;
      mip.integrality.push_back(map.trans_ind(i, j, k));
      lp.cost[map.trans_ind(i, j, k)] = pair_min[i][j];
    }
  });

  for (int i = 0; i < n; ++i) {
    SparseRow row;
    for (int k = 0; k < n; ++k) row.emplace_back(map.assign(i, k), 1.0);
    lp.add_row(RowSense::kEq, 1.0, std::move(row));
  }
  for (int k = 0; k < n; ++k) {
    SparseRow row;
    for (int i = 0; i < n; ++i) row.emplace_back(map.assign(i, k), 1.0);
    lp.add_row(RowSense::kEq, 1.0, std::move(row));
  }
  map.for_each_pair([&](int i, int j) {
    for (int k = 0; k + 1 < n; ++k)
      lp.add_row(RowSense::kLe, 1.0,
                 {{map.assign(i, k), 1.0},
                  {map.assign(j, k + 1), 1.0},
                  {map.trans_ind(i, j, k), -1.0}});
  });
  for (int i = 0; i < n; ++i)
    lp.add_row(RowSense::kEq, 0.0,
               {{map.first_ind(i), 1.0}, {map.assign(i, 0), -1.0}});

  const MipSolution sol = solve_mip(mip);
  if (sol.status != MipStatus::kOptimal)
    throw std::logic_error("min_transition_assignment: MILP failed");
  MinTransition out;
  out.total = sol.objective;
  out.sequence.assign(n, -1);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      if (sol.x[map.assign(i, k)] > 0.5) out.sequence[k] = i;
  return out;
}

}  // namespace detail

// Feasibility condition: minimum production time plus the minimum total
// transition time (an assignment MILP over the sequence) must fit in the
// remaining window.
inline FeasibilityCertificate check_feasibility(const ScheduleInstance& inst) {
  if (!inst.prepared)
    throw std::logic_error("check_feasibility: instance not prepared");
  const int n = inst.num_products();
  const detail::MinTransition mt = detail::min_transition_assignment(
      n, inst.theta_min_model, inst.theta_hat_min_model);

  FeasibilityCertificate cert;
  cert.available = inst.horizon - inst.t0;
  cert.transition_time = mt.total;
  cert.sequence = mt.sequence;
  cert.first_product = cert.sequence[0];
  for (int i = 0; i < n; ++i)
    cert.production_time +=
        inst.products[i].demand / inst.products[i].production_rate;
  cert.feasible = cert.production_time + cert.transition_time <=
                  cert.available + 1e-9;
  return cert;
}

// Sales/operating/inventory/fixed-cost part of the objective, recomputed
// from incumbent columns.
inline double schedule_profit(const ScheduleInstance& inst,
                              const MasterIndexMap& map,
                              const std::vector<double>& x) {
  const int n = inst.num_products();
  double phi = 0.0;
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k)
      phi += inst.products[i].price * x[map.sales(i, k)] -
             inst.products[i].operating_cost * x[map.quantity(i, k)] -
             inst.inventory_cost * x[map.inventory(i, k)];
  map.for_each_pair([&](int i, int j) {
    for (int k = 0; k < n; ++k)
      phi -= inst.fixed_transition_cost[i][j] * x[map.trans_ind(i, j, k)];
  });
  return phi;
}

struct TrueObjective {
  double objective = 0.0;        // schedule profit minus exact dynamic costs
  double schedule_part = 0.0;    // profit from the incumbent columns
  double transition_part = 0.0;  // sum of exactly re-solved value functions
  long subproblem_solves = 0;
};

// Re-solves every active transition exactly at the incumbent's times;
// the ground-truth objective independent of cuts and surrogates.
inline TrueObjective evaluate_true_objective(const ScheduleInstance& inst,
                                             const MasterIndexMap& map,
                                             const std::vector<double>& x) {
  const int n = inst.num_products();
  TrueObjective out;
  out.schedule_part = schedule_profit(inst, map, x);

  std::vector<int> sequence(n, -1);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      if (x[map.assign(i, k)] > 0.5) sequence[k] = i;

  struct Job {
    TransitionNlp nlp;
    double cost = 0.0;
  };
  std::vector<Job> jobs;
  const int first = sequence[0];
  if (inst.theta_hat_min[first] > 0.0 ||
      inst.x0 != inst.products[first].steady_conc)
    jobs.push_back(
        {initial_transition_nlp(
             inst, first,
             std::max({x[map.init_time(first)],
                       inst.theta_hat_min_model[first], 1e-6})),
         0.0});
  for (int k = 0; k + 1 < n; ++k) {
    const int i = sequence[k], j = sequence[k + 1];
    jobs.push_back({pair_transition_nlp(
                        inst, i, j,
                        std::max(x[map.trans_time(i, j, k)],
                                 inst.theta_min_model[i][j])),
                    0.0});
  }

  parallel_for(jobs.size(), [&](std::size_t idx) {
    const TransitionResult r = solve_transition(jobs[idx].nlp);
    if (!r.converged)
      throw SubproblemNotConverged(
          "evaluate_true_objective: transition solve did not converge");
    jobs[idx].cost = r.cost;
  });
  for (const Job& job : jobs) out.transition_part += job.cost;
  out.subproblem_solves = static_cast<long>(jobs.size());
  out.objective = out.schedule_part - out.transition_part;
  return out;
}

}  // namespace bmpc
