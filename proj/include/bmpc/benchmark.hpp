// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "bmpc/gbd.hpp"
#include "bmpc/rng.hpp"
#include "bmpc/schedule.hpp"
#include "bmpc/surrogate.hpp"
#include "bmpc/threads.hpp"

namespace bmpc {

struct FeasibleDrawNotFound : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DisturbedInstance {
  ScheduleInstance instance;  // fully prepared
  std::uint64_t sample_seed = 0;
  int attempts = 0;
  FeasibilityCertificate certificate;
};

// Samples (T0, x0, demand deltas) until the feasibility condition accepts:
// T0 ~ U(0.1 H, 0.5 H), x0 ~ U(0.05, 0.95), each demand shifted by
// U(-change, +change) and floored at zero. A cheap screen using the
// continuous initial minimum times rejects hopeless draws before the
// discretization-aware refresh runs.
inline DisturbedInstance random_disturbance(const ScheduleInstance& base,
                                            std::uint64_t seed) {
  if (!base.pairs_prepared)
    throw std::logic_error("random_disturbance: base pairs not prepared");
  const int n = base.num_products();
  Rng rng(seed);
  DisturbedInstance out;
  out.sample_seed = seed;

  double production = 0.0;
  for (const auto& p : base.products)
    production += p.demand / p.production_rate;  // before demand shift

  for (int attempt = 1; attempt <= 1000; ++attempt) {
    out.attempts = attempt;
    ScheduleInstance inst = base;
    inst.t0 = rng.uniform(0.1 * inst.horizon, 0.5 * inst.horizon);
    inst.x0 = rng.uniform(0.05, 0.95);
    for (auto& p : inst.products) {
      const double delta = rng.uniform(-p.demand_change, p.demand_change);
      p.demand = std::max(0.0, p.demand + delta);
    }

    // optimistic screen with the continuous (bang-bang) initial times
    std::vector<double> initial_cont(n, 0.0);
    bool reachable = true;
    for (int i = 0; i < n; ++i) {
      const double target = inst.products[i].steady_conc;
      if (inst.x0 == target) continue;
      try {
        initial_cont[i] = min_transition_time(inst.plant, inst.x0, target);
      } catch (const UnreachableTarget&) {
        reachable = false;
        break;
      }
    }
    if (!reachable) continue;
    double prod_time = 0.0;
    for (const auto& p : inst.products)
      prod_time += p.demand / p.production_rate;
    const detail::MinTransition screen = detail::min_transition_assignment(
        n, inst.theta_min_model, initial_cont);
    if (prod_time + screen.total > inst.horizon - inst.t0 + 1e-9) continue;

    refresh_initial_state(inst);
    const FeasibilityCertificate cert = check_feasibility(inst);
    if (!cert.feasible) continue;
    out.instance = std::move(inst);
    out.certificate = cert;
    return out;
  }
  throw FeasibleDrawNotFound(
      "random_disturbance: no feasible draw in 1000 attempts");
}

struct BenchmarkRow {
  std::string algorithm;
  int runs = 0;
  int failures = 0;
  double mean_time_s = 0.0;
  double std_time_s = 0.0;
  double mean_error_pct = std::numeric_limits<double>::quiet_NaN();
  double pct_reduction_vs_mgbd = std::numeric_limits<double>::quiet_NaN();
  double pct_reduction_vs_hmgbd = std::numeric_limits<double>::quiet_NaN();
  double fold_vs_mgbd = std::numeric_limits<double>::quiet_NaN();
  double fold_vs_hmgbd = std::numeric_limits<double>::quiet_NaN();
};

struct BenchmarkResult {
  std::vector<std::string> algorithms;
  std::vector<std::uint64_t> run_seeds;
  // runs[r][a]: report of algorithm a on disturbance r
  std::vector<std::vector<SolveReport>> runs;
  std::vector<BenchmarkRow> rows;
};

struct BenchmarkSettings {
  std::vector<std::string> algorithms;  // mgbd hmgbd bnc-exact bnc-nn bnc-dt bnc-rf
  std::map<std::string, const SurrogateBundle*> bundles;  // by family name
  int runs = 20;
  std::uint64_t seed = 0;
  bool parallel = false;
  GbdOptions gbd;
};

namespace detail {

inline SolveReport dispatch_algorithm(const std::string& name,
                                      const ScheduleInstance& inst,
                                      const BenchmarkSettings& cfg) {
  if (name == "mgbd") return solve_multicut(inst, cfg.gbd);
  if (name == "hmgbd") return solve_hybrid_multicut(inst, cfg.gbd);
  if (name == "bnc-exact") return solve_branch_and_check(inst, nullptr, cfg.gbd);
  if (name == "bnc-nn" || name == "bnc-dt" || name == "bnc-rf") {
    const std::string family = name.substr(4);
    const auto it = cfg.bundles.find(family);
    if (it == cfg.bundles.end() || !it->second)
      throw std::invalid_argument("benchmark: no bundle for " + name);
    return solve_branch_and_check(inst, it->second, cfg.gbd);
  }
  throw std::invalid_argument("benchmark: unknown algorithm " + name);
}

inline double mean_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return v.empty() ? 0.0 : acc / v.size();
}

inline double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / (v.size() - 1));
}

}  // namespace detail

// Runs every algorithm on `runs` seeded feasible disturbances and
// aggregates timing and error statistics against the exact-GBD reference.
inline BenchmarkResult run_benchmark(const ScheduleInstance& base,
                                     const BenchmarkSettings& cfg) {
  if (cfg.algorithms.empty())
    throw std::invalid_argument("benchmark: no algorithms");
  BenchmarkResult result;
  result.algorithms = cfg.algorithms;
  Rng seeder(cfg.seed);
  result.run_seeds.resize(cfg.runs);
  for (int r = 0; r < cfg.runs; ++r) result.run_seeds[r] = seeder.next_u64();
  result.runs.assign(cfg.runs, {});

  // reference for the error metric: the exact algorithm that ran
  std::string ref;
  for (const std::string& cand : {"mgbd", "hmgbd", "bnc-exact"})
    for (const std::string& a : cfg.algorithms)
      if (ref.empty() && a == cand) ref = cand;

  auto run_one = [&](std::size_t r) {
    const DisturbedInstance draw =
        random_disturbance(base, result.run_seeds[r]);
    std::vector<SolveReport>& reports = result.runs[r];
    for (const std::string& name : cfg.algorithms) {
      try {
        reports.push_back(detail::dispatch_algorithm(name, draw.instance, cfg));
      } catch (const std::exception& e) {
        SolveReport failed;
        failed.algorithm = name + " [failed: " + e.what() + "]";
        failed.status = GbdStatus::kIterationLimit;
        reports.push_back(std::move(failed));
      }
    }
    if (!ref.empty()) {
      const SolveReport* ref_report = nullptr;
      for (std::size_t a = 0; a < cfg.algorithms.size(); ++a)
        if (cfg.algorithms[a] == ref) ref_report = &reports[a];
      if (ref_report && ref_report->status == GbdStatus::kOptimal)
        for (std::size_t a = 0; a < cfg.algorithms.size(); ++a)
          if (cfg.algorithms[a] != ref &&
              reports[a].status == GbdStatus::kOptimal)
            reports[a].error_pct = error_metric(ref_report->objective,
                                                reports[a].true_objective);
    }
  };

  if (cfg.parallel)
    parallel_for(static_cast<std::size_t>(cfg.runs), run_one);
  else
    for (int r = 0; r < cfg.runs; ++r) run_one(r);

  // aggregate rows
  std::map<std::string, double> mean_time;
  for (std::size_t a = 0; a < cfg.algorithms.size(); ++a) {
    BenchmarkRow row;
    row.algorithm = cfg.algorithms[a];
    std::vector<double> times, errors;
    for (int r = 0; r < cfg.runs; ++r) {
      const SolveReport& rep = result.runs[r][a];
      if (rep.status != GbdStatus::kOptimal) {
        ++row.failures;
        continue;
      }
      times.push_back(rep.wall_seconds);
      if (std::isfinite(rep.error_pct)) errors.push_back(rep.error_pct);
    }
    row.runs = static_cast<int>(times.size());
    row.mean_time_s = detail::mean_of(times);
    row.std_time_s = detail::stddev_of(times);
    if (!errors.empty()) row.mean_error_pct = detail::mean_of(errors);
    mean_time[row.algorithm] = row.mean_time_s;
    result.rows.push_back(std::move(row));
  }
  for (BenchmarkRow& row : result.rows) {
    const auto fill = [&](const std::string& target, double& pct,
                          double& fold) {
      const auto it = mean_time.find(target);
      if (it == mean_time.end() || row.algorithm == target ||
          row.mean_time_s <= 0.0 || it->second <= 0.0)
        return;
      pct = 100.0 * (1.0 - row.mean_time_s / it->second);
      fold = it->second / row.mean_time_s;
    };
    fill("mgbd", row.pct_reduction_vs_mgbd, row.fold_vs_mgbd);
    fill("hmgbd", row.pct_reduction_vs_hmgbd, row.fold_vs_hmgbd);
  }
  return result;
}

// Aggregate CSV: '.' decimals, LF line endings, empty cells for undefined
// statistics.
inline void write_benchmark_csv(std::ostream& os, const BenchmarkResult& res) {
  auto cell = [](double v) {
    if (!std::isfinite(v)) return std::string();
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return std::string(buf);
  };
  os << "algorithm,mean_time_s,std_time_s,mean_error_pct,"
        "pct_reduction_vs_mgbd,pct_reduction_vs_hmgbd,fold_vs_mgbd,"
        "fold_vs_hmgbd\n";
  for (const BenchmarkRow& row : res.rows)
    os << row.algorithm << ',' << cell(row.mean_time_s) << ','
       << cell(row.std_time_s) << ',' << cell(row.mean_error_pct) << ','
       << cell(row.pct_reduction_vs_mgbd) << ','
       << cell(row.pct_reduction_vs_hmgbd) << ',' << cell(row.fold_vs_mgbd)
       << ',' << cell(row.fold_vs_hmgbd) << '\n';
}

}  // namespace bmpc
