// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "bmpc/mlp.hpp"
#include "bmpc/rng.hpp"
#include "bmpc/schedule.hpp"
#include "bmpc/threads.hpp"
#include "bmpc/tree.hpp"

namespace bmpc {

// Feature rows (1-D: transition time; 2-D: time and starting state) with
// their labels and standardization constants.
struct Dataset {
  int dim = 1;
  std::vector<Eigen::VectorXd> features;
  std::vector<double> labels;
  Eigen::VectorXd feat_mean, feat_scale;
  double label_mean = 0.0, label_scale = 1.0;

  std::size_t size() const { return labels.size(); }

  void push(std::initializer_list<double> feat, double label) {
    Eigen::VectorXd f(dim);
    int i = 0;
    for (double v : feat) f[i++] = v;
    features.push_back(std::move(f));
    labels.push_back(label);
  }

  void compute_normalization() {
    const int n = static_cast<int>(size());
    feat_mean = Eigen::VectorXd::Zero(dim);
    feat_scale = Eigen::VectorXd::Ones(dim);
    for (const auto& f : features) feat_mean += f;
    if (n > 0) feat_mean /= n;
    for (int i = 0; i < dim; ++i) {
      double var = 0.0;
      for (const auto& f : features) var += std::pow(f[i] - feat_mean[i], 2);
      if (n > 0) feat_scale[i] = std::max(std::sqrt(var / n), 1e-12);
    }
    double lm = 0.0;
    for (double v : labels) lm += v;
    label_mean = n > 0 ? lm / n : 0.0;
    double lv = 0.0;
    for (double v : labels) lv += std::pow(v - label_mean, 2);
    label_scale = n > 0 ? std::max(std::sqrt(lv / n), 1e-12) : 1.0;
  }

  Eigen::VectorXd normalize(const Eigen::VectorXd& f) const {
    return (f - feat_mean).cwiseQuotient(feat_scale);
  }
  Eigen::VectorXd denormalize(const Eigen::VectorXd& f) const {
    return feat_mean + f.cwiseProduct(feat_scale);
  }
};

struct TooManyFailures : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Sweeps n equally spaced transition times across [theta_min, 5 theta_min],
// solving each subproblem exactly; consecutive solves warm-start from the
// previous trajectory. Returns the cost and multiplier datasets.
struct PairData {
  Dataset cost;
  Dataset lambda;
  double theta_min = 0.0;
  int dropped = 0;
};

inline PairData generate_pair_data(const Plant& plant,
                                   const CollocationGrid& grid, double alpha_u,
                                   double from_conc, double to_conc,
                                   double to_flow, int n, double theta_lo = 0.0,
                                   double theta_hi = 0.0) {
  if (n < 2) throw std::invalid_argument("generate_pair_data: n < 2");
  if (from_conc == to_conc)
    throw std::invalid_argument("generate_pair_data: identical endpoints");
  PairData out;
  out.cost.dim = out.lambda.dim = 1;
  out.theta_min = min_transition_time(plant, from_conc, to_conc);
  if (theta_lo <= 0.0)
    theta_lo = min_feasible_theta(plant, grid, alpha_u, from_conc, to_conc,
                                  to_flow, out.theta_min);
  if (theta_hi <= 0.0) theta_hi = 5.0 * out.theta_min;
  theta_hi = std::max(theta_hi, theta_lo);

  TransitionTrajectory warm;
  bool have_warm = false;
  for (int s = 0; s < n; ++s) {
    const double theta =
        theta_lo + (theta_hi - theta_lo) * static_cast<double>(s) / (n - 1);
    const TransitionNlp nlp = build_transition_nlp(
        from_conc, to_conc, to_flow, theta, grid, plant, alpha_u);
    TransitionResult r =
        solve_transition(nlp, have_warm ? &warm : nullptr);
    if (!r.converged) r = solve_transition(nlp);  // cold retry
    if (!r.converged) {
      ++out.dropped;
      continue;
    }
    warm = r.trajectory;
    have_warm = true;
    out.cost.push({theta}, r.cost);
    out.lambda.push({theta}, r.multiplier);
  }
  if (out.dropped > 0.05 * n)
    throw TooManyFailures("generate_pair_data: dropped " +
                          std::to_string(out.dropped) + " of " +
                          std::to_string(n));
  out.cost.compute_normalization();
  out.lambda.compute_normalization();
  return out;
}

// Monte-Carlo sampling of the initial transition: draw the starting state
// uniformly on (0,1), the transition time uniformly on
// [theta_hat_min(x0), 2 theta_hat_min(x0)], and route each exact solve into
// the lower (x0 <= target) or upper dataset.
struct InitialData {
  Dataset cost_lower, cost_upper;
  Dataset lambda_lower, lambda_upper;
  int dropped = 0;
};

inline InitialData generate_initial_data(const Plant& plant,
                                         const CollocationGrid& grid,
                                         double alpha_u, double target_conc,
                                         double target_flow, int n,
                                         std::uint64_t seed) {
  if (n < 10) throw std::invalid_argument("generate_initial_data: n < 10");
  InitialData out;
  out.cost_lower.dim = out.cost_upper.dim = 2;
  out.lambda_lower.dim = out.lambda_upper.dim = 2;
  Rng rng(seed);

  int produced = 0;
  long guard = 0;
  while (produced < n) {
    if (++guard > 50L * n)
      throw TooManyFailures("generate_initial_data: rejection loop stuck");
    const double x0 = rng.uniform();
    double theta_min;
    if (x0 == target_conc) {
      theta_min = 1e-3;
    } else {
      try {
        theta_min = std::max(min_transition_time(plant, x0, target_conc), 1e-3);
      } catch (const UnreachableTarget&) {
        continue;  // redraw
      }
    }
    const double theta = rng.uniform(theta_min, 2.0 * theta_min);
    const TransitionNlp nlp = build_transition_nlp(
        x0, target_conc, target_flow, theta, grid, plant, alpha_u);
    const TransitionResult r = solve_transition(nlp);
    ++produced;
    if (!r.converged) {
      ++out.dropped;
      continue;
    }
    const bool lower = x0 <= target_conc;
    (lower ? out.cost_lower : out.cost_upper).push({theta, x0}, r.cost);
    (lower ? out.lambda_lower : out.lambda_upper).push({theta, x0}, r.multiplier);
  }
  if (out.dropped > 0.05 * n)
    throw TooManyFailures("generate_initial_data: dropped " +
                          std::to_string(out.dropped) + " of " +
                          std::to_string(n));
  for (Dataset* d : {&out.cost_lower, &out.cost_upper, &out.lambda_lower,
                     &out.lambda_upper})
    d->compute_normalization();
  return out;
}

enum class SurrogateFamily { kNeuralNet, kDecisionTree, kRandomForest };

inline std::string family_name(SurrogateFamily f) {
  switch (f) {
    case SurrogateFamily::kNeuralNet: return "nn";
    case SurrogateFamily::kDecisionTree: return "dt";
    case SurrogateFamily::kRandomForest: return "rf";
  }
  return "?";
}

// One trained regressor, tagged by family.
struct SurrogateModel {
  SurrogateFamily family = SurrogateFamily::kDecisionTree;
  MlpRegressor mlp;
  RegressionTree tree;
  RandomForest forest;
  double holdout_r2 = 0.0;
  int train_rows = 0;

  double predict(const Eigen::VectorXd& x) const {
    switch (family) {
      case SurrogateFamily::kNeuralNet: return mlp.predict(x);
      case SurrogateFamily::kDecisionTree: return tree.predict(x);
      case SurrogateFamily::kRandomForest: return forest.predict(x);
    }
    return 0.0;
  }
};

struct SurrogateTrainParams {
  int forest_trees = 100;
  MlpConfig mlp;
  double holdout_fraction = 0.2;
};

namespace detail {

inline double r_squared(const SurrogateModel& model,
                        const std::vector<Eigen::VectorXd>& X,
                        const std::vector<double>& y) {
  if (X.empty()) return 1.0;
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= y.size();
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    const double p = model.predict(X[i]);
    ss_res += (y[i] - p) * (y[i] - p);
    ss_tot += (y[i] - mean) * (y[i] - mean);
  }
  if (ss_tot < 1e-300) return ss_res < 1e-12 ? 1.0 : 0.0;
  return 1.0 - ss_res / ss_tot;
}

// Seeded 80/20 split, family-dispatched fit, holdout R^2 recorded.
inline SurrogateModel fit_model(SurrogateFamily family, const Dataset& ds,
                                std::uint64_t seed,
                                const SurrogateTrainParams& params) {
  const int n = static_cast<int>(ds.size());
  if (n == 0) throw std::invalid_argument("fit_model: empty dataset");
  Rng rng(seed);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  for (int i = n - 1; i > 0; --i)
    std::swap(order[i], order[rng.below(static_cast<std::uint64_t>(i + 1))]);
  int holdout = static_cast<int>(params.holdout_fraction * n);
  if (n - holdout < 2) holdout = 0;

  std::vector<Eigen::VectorXd> Xt, Xh;
  std::vector<double> yt, yh;
  for (int s = 0; s < n; ++s) {
    if (s < n - holdout) {
      Xt.push_back(ds.features[order[s]]);
      yt.push_back(ds.labels[order[s]]);
    } else {
      Xh.push_back(ds.features[order[s]]);
      yh.push_back(ds.labels[order[s]]);
    }
  }

  SurrogateModel model;
  model.family = family;
  model.train_rows = static_cast<int>(yt.size());
  switch (family) {
    case SurrogateFamily::kNeuralNet:
      model.mlp = train_mlp(Xt, yt, seed ^ 0xa5a5a5a5ULL, params.mlp);
      break;
    case SurrogateFamily::kDecisionTree:
      model.tree = train_tree(Xt, yt);
      break;
    case SurrogateFamily::kRandomForest:
      model.forest =
          train_forest(Xt, yt, params.forest_trees, seed ^ 0x5a5a5a5aULL);
      break;
  }
  model.holdout_r2 = holdout > 0 ? r_squared(model, Xh, yh) : 1.0;
  return model;
}

}  // namespace detail

// Trained regressors for every ordered pair and every initial transition
// (lower/upper split on the starting state against the product's steady
// concentration), one family per bundle.
struct SurrogateBundle {
  SurrogateFamily family = SurrogateFamily::kDecisionTree;
  int n_products = 0;
  std::uint64_t seed = 0;
  int n_pair_samples = 0;
  int n_initial_samples = 0;
  std::vector<double> steady_conc;  // routing thresholds per product

  std::vector<SurrogateModel> pair_cost, pair_lambda;          // by pair index
  std::vector<SurrogateModel> init_cost_lower, init_cost_upper;
  std::vector<SurrogateModel> init_lambda_lower, init_lambda_upper;

  int pair_index(int i, int j) const {
    return i * (n_products - 1) + (j < i ? j : j - 1);
  }

  bool covers(int n) const { return n == n_products; }
};

// Generates all datasets and fits the bundle. Deterministic for a given
// seed: every target derives its own stream, so the parallel schedule does
// not affect the result.
inline SurrogateBundle train_bundle(const ScheduleInstance& inst,
                                    SurrogateFamily family, int n_pair,
                                    int n_initial, std::uint64_t seed,
                                    SurrogateTrainParams params = {}) {
  if (!inst.prepared)
    throw std::logic_error("train_bundle: instance not prepared");
  const int n = inst.num_products();
  SurrogateBundle bundle;
  bundle.family = family;
  bundle.n_products = n;
  bundle.seed = seed;
  bundle.n_pair_samples = n_pair;
  bundle.n_initial_samples = n_initial;
  bundle.steady_conc.resize(n);
  for (int i = 0; i < n; ++i)
    bundle.steady_conc[i] = inst.products[i].steady_conc;

  const int pairs = n * (n - 1);
  bundle.pair_cost.resize(pairs);
  bundle.pair_lambda.resize(pairs);
  bundle.init_cost_lower.resize(n);
  bundle.init_cost_upper.resize(n);
  bundle.init_lambda_lower.resize(n);
  bundle.init_lambda_upper.resize(n);

  struct Task {
    int i, j;  // j == -1: initial transition target i
  };
  std::vector<Task> tasks;
  for (int i = 0; i < n; ++i) {
    tasks.push_back({i, -1});
    for (int j = 0; j < n; ++j)
      if (i != j) tasks.push_back({i, j});
  }

  const CollocationGrid grid = inst.grid();
  parallel_for(tasks.size(), [&](std::size_t idx) {
    const Task t = tasks[idx];
    if (t.j < 0) {
      const std::uint64_t s =
          seed ^ (0x1000193ULL * (static_cast<std::uint64_t>(t.i) + 1));
      const InitialData data = generate_initial_data(
          inst.plant, grid, inst.alpha_u, inst.products[t.i].steady_conc,
          inst.products[t.i].steady_flow, n_initial, s);
      bundle.init_cost_lower[t.i] =
          detail::fit_model(family, data.cost_lower, s ^ 1, params);
      bundle.init_cost_upper[t.i] =
          detail::fit_model(family, data.cost_upper, s ^ 2, params);
      bundle.init_lambda_lower[t.i] =
          detail::fit_model(family, data.lambda_lower, s ^ 3, params);
      bundle.init_lambda_upper[t.i] =
          detail::fit_model(family, data.lambda_upper, s ^ 4, params);
    } else {
      const std::uint64_t s =
          seed ^ (0x100000001b3ULL *
                  (static_cast<std::uint64_t>(t.i) * 131 + t.j + 7));
      const PairData data = generate_pair_data(
          inst.plant, grid, inst.alpha_u, inst.products[t.i].steady_conc,
          inst.products[t.j].steady_conc, inst.products[t.j].steady_flow,
          n_pair, inst.theta_min_model[t.i][t.j],
          std::max(5.0 * inst.theta_min[t.i][t.j],
                   inst.theta_min_model[t.i][t.j]));
      const int p = bundle.pair_index(t.i, t.j);
      bundle.pair_cost[p] = detail::fit_model(family, data.cost, s ^ 1, params);
      bundle.pair_lambda[p] =
          detail::fit_model(family, data.lambda, s ^ 2, params);
    }
  });
  return bundle;
}

struct UncoveredTarget : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Cut from the pair models at the anchor transition time.
inline BendersCut predict_pair_cut(const SurrogateBundle& bundle, int i, int j,
                                   int slot, double theta) {
  if (i < 0 || j < 0 || i >= bundle.n_products || j >= bundle.n_products ||
      i == j)
    throw UncoveredTarget("predict_pair_cut: no model for this pair");
  Eigen::VectorXd x(1);
  x[0] = theta;
  const int p = bundle.pair_index(i, j);
  double value = bundle.pair_cost[p].predict(x);
  double slope = bundle.pair_lambda[p].predict(x);
  if (value < 0.0) {
    value = 0.0;
    slope = 0.0;
  }
  BendersCut cut;
  cut.target = BendersCut::Target::kPair;
  cut.from = i;
  cut.to = j;
  cut.slot = slot;
  cut.anchor = theta;
  cut.value = value;
  cut.slope = slope;
  cut.from_surrogate = true;
  return cut;
}

// Cut from the initial-transition models: the lower pair serves starting
// states at or below the product's steady concentration, the upper pair the
// rest. Queries below the reachable minimum time are evaluated at it.
inline BendersCut predict_initial_cut(const SurrogateBundle& bundle,
                                      int product, double theta_hat, double x0,
                                      double theta_hat_min) {
  if (product < 0 || product >= bundle.n_products)
    throw UncoveredTarget("predict_initial_cut: no model for this product");
  const bool lower = x0 <= bundle.steady_conc[product];
  Eigen::VectorXd x(2);
  x[0] = std::max(theta_hat, theta_hat_min);
  x[1] = x0;
  double value = (lower ? bundle.init_cost_lower
                        : bundle.init_cost_upper)[product].predict(x);
  double slope = (lower ? bundle.init_lambda_lower
                        : bundle.init_lambda_upper)[product].predict(x);
  if (value < 0.0) {
    value = 0.0;
    slope = 0.0;
  }
  BendersCut cut;
  cut.target = BendersCut::Target::kInitial;
  cut.to = product;
  cut.slot = 0;
  cut.anchor = x[0];
  cut.value = value;
  cut.slope = slope;
  cut.from_surrogate = true;
  cut.anchor_state = x0;
  return cut;
}

}  // namespace bmpc
