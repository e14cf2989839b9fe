// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "bmpc/gbd.hpp"
#include "bmpc/schedule.hpp"
#include "bmpc/surrogate.hpp"

namespace bmpc::io {

using nlohmann::json;

// Raised on schema violations; `field` names the offending entry.
struct MalformedInput : std::runtime_error {
  std::string field;
  MalformedInput(const std::string& f, const std::string& why)
      : std::runtime_error("malformed input at '" + f + "': " + why),
        field(f) {}
};

namespace detail {

inline const json& need(const json& j, const std::string& key,
                        const std::string& context) {
  if (!j.contains(key)) throw MalformedInput(context + "." + key, "missing");
  return j.at(key);
}

inline double need_number(const json& j, const std::string& key,
                          const std::string& context) {
  const json& v = need(j, key, context);
  if (!v.is_number()) throw MalformedInput(context + "." + key, "not a number");
  return v.get<double>();
}

}  // namespace detail

inline json instance_to_json(const ScheduleInstance& inst) {
  json j;
  j["plant"] = {{"V", inst.plant.volume},
                {"k", inst.plant.rate_const},
                {"c_feed", inst.plant.feed_conc},
                {"u_lo", inst.plant.flow_lo},
                {"u_hi", inst.plant.flow_hi}};
  json products = json::array();
  for (const auto& p : inst.products)
    products.push_back({{"demand", p.demand},
                        {"demand_change", p.demand_change},
                        {"price", p.price},
                        {"operating_cost", p.operating_cost},
                        {"production_rate", p.production_rate},
                        {"steady_flow", p.steady_flow},
                        {"steady_concentration", p.steady_conc}});
  j["products"] = std::move(products);
  j["economics"] = {{"C_inv", inst.inventory_cost},
                    {"alpha_u", inst.alpha_u},
                    {"C_tr", inst.fixed_transition_cost}};
  j["horizon"] = {{"H", inst.horizon}, {"T0", inst.t0}};
  j["state"] = {{"x0", inst.x0}, {"I0", inst.initial_inventory}};
  j["collocation"] = {{"N_fe", inst.n_fe}, {"N_c", inst.n_c}};
  return j;
}

inline ScheduleInstance instance_from_json(const json& j) {
  using detail::need;
  using detail::need_number;
  ScheduleInstance inst;
  const json& plant = need(j, "plant", "instance");
  inst.plant.volume = need_number(plant, "V", "plant");
  inst.plant.rate_const = need_number(plant, "k", "plant");
  inst.plant.feed_conc = need_number(plant, "c_feed", "plant");
  inst.plant.flow_lo = need_number(plant, "u_lo", "plant");
  inst.plant.flow_hi = need_number(plant, "u_hi", "plant");

  const json& products = need(j, "products", "instance");
  if (!products.is_array() || products.empty())
    throw MalformedInput("instance.products", "need a nonempty array");
  int idx = 0;
  for (const json& p : products) {
    const std::string ctx = "products[" + std::to_string(idx++) + "]";
    ProductSpec spec;
    spec.demand = need_number(p, "demand", ctx);
    spec.demand_change = need_number(p, "demand_change", ctx);
    spec.price = need_number(p, "price", ctx);
    spec.operating_cost = need_number(p, "operating_cost", ctx);
    spec.production_rate = need_number(p, "production_rate", ctx);
    spec.steady_flow = need_number(p, "steady_flow", ctx);
    if (p.contains("steady_concentration"))
      spec.steady_conc = p.at("steady_concentration").get<double>();
    inst.products.push_back(spec);
  }

  const json& econ = need(j, "economics", "instance");
  inst.inventory_cost = need_number(econ, "C_inv", "economics");
  inst.alpha_u = need_number(econ, "alpha_u", "economics");
  if (econ.contains("C_tr") && !econ.at("C_tr").is_null()) {
    inst.fixed_transition_cost =
        econ.at("C_tr").get<std::vector<std::vector<double>>>();
    if (inst.fixed_transition_cost.size() != inst.products.size())
      throw MalformedInput("economics.C_tr", "matrix size mismatch");
  }

  const json& horizon = need(j, "horizon", "instance");
  inst.horizon = need_number(horizon, "H", "horizon");
  inst.t0 = need_number(horizon, "T0", "horizon");

  const json& state = need(j, "state", "instance");
  inst.x0 = need_number(state, "x0", "state");
  inst.initial_inventory =
      detail::need(state, "I0", "state").get<std::vector<double>>();
  if (inst.initial_inventory.size() != inst.products.size())
    throw MalformedInput("state.I0", "length mismatch with products");

  const json& coll = need(j, "collocation", "instance");
  inst.n_fe = static_cast<int>(need_number(coll, "N_fe", "collocation"));
  inst.n_c = static_cast<int>(need_number(coll, "N_c", "collocation"));
  try {
    inst.validate();
  } catch (const std::invalid_argument& e) {
    throw MalformedInput("instance", e.what());
  }
  return inst;
}

inline void save_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

inline json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw MalformedInput(path, e.what());
  }
  return j;
}

inline void save_instance(const std::string& path,
                          const ScheduleInstance& inst) {
  save_json(path, instance_to_json(inst));
}

inline ScheduleInstance load_instance(const std::string& path) {
  return instance_from_json(load_json(path));
}

// --- surrogate models -----------------------------------------------------

inline json mlp_to_json(const MlpRegressor& net) {
  json layers = json::array();
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    const auto& W = net.weights[l];
    std::vector<double> flat(W.size());
    for (int r = 0; r < W.rows(); ++r)
      for (int c = 0; c < W.cols(); ++c) flat[r * W.cols() + c] = W(r, c);
    layers.push_back({{"rows", W.rows()},
                      {"cols", W.cols()},
                      {"weights", flat},
                      {"bias", std::vector<double>(net.biases[l].data(),
                                                   net.biases[l].data() +
                                                       net.biases[l].size())}});
  }
  return {{"input_dim", net.input_dim},
          {"layers", layers},
          {"feat_mean", std::vector<double>(net.feat_mean.data(),
                                            net.feat_mean.data() +
                                                net.feat_mean.size())},
          {"feat_scale", std::vector<double>(net.feat_scale.data(),
                                             net.feat_scale.data() +
                                                 net.feat_scale.size())},
          {"label_mean", net.label_mean},
          {"label_scale", net.label_scale}};
}

inline MlpRegressor mlp_from_json(const json& j) {
  MlpRegressor net;
  net.input_dim = j.at("input_dim").get<int>();
  for (const json& l : j.at("layers")) {
    const int rows = l.at("rows").get<int>(), cols = l.at("cols").get<int>();
    const auto flat = l.at("weights").get<std::vector<double>>();
    Eigen::MatrixXd W(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) W(r, c) = flat[r * cols + c];
    net.weights.push_back(std::move(W));
    const auto bias = l.at("bias").get<std::vector<double>>();
    net.biases.push_back(
        Eigen::Map<const Eigen::VectorXd>(bias.data(), bias.size()));
  }
  const auto fm = j.at("feat_mean").get<std::vector<double>>();
  const auto fs = j.at("feat_scale").get<std::vector<double>>();
  net.feat_mean = Eigen::Map<const Eigen::VectorXd>(fm.data(), fm.size());
  net.feat_scale = Eigen::Map<const Eigen::VectorXd>(fs.data(), fs.size());
  net.label_mean = j.at("label_mean").get<double>();
  net.label_scale = j.at("label_scale").get<double>();
  return net;
}

inline json tree_to_json(const RegressionTree& tree) {
  json nodes = json::array();
  for (const auto& nd : tree.nodes)
    nodes.push_back({{"feature", nd.feature},
                     {"threshold", nd.threshold},
                     {"left", nd.left},
                     {"right", nd.right},
                     {"leaf_value", nd.value}});
  return {{"nodes", nodes}};
}

inline RegressionTree tree_from_json(const json& j) {
  RegressionTree tree;
  for (const json& nd : j.at("nodes")) {
    RegressionTree::Node node;
    node.feature = nd.at("feature").get<int>();
    node.threshold = nd.at("threshold").get<double>();
    node.left = nd.at("left").get<int>();
    node.right = nd.at("right").get<int>();
    node.value = nd.at("leaf_value").get<double>();
    tree.nodes.push_back(node);
  }
  return tree;
}

inline json model_to_json(const SurrogateModel& model) {
  json j;
  j["holdout_r2"] = model.holdout_r2;
  j["train_rows"] = model.train_rows;
  switch (model.family) {
    case SurrogateFamily::kNeuralNet:
      j["mlp"] = mlp_to_json(model.mlp);
      break;
    case SurrogateFamily::kDecisionTree:
      j["tree"] = tree_to_json(model.tree);
      break;
    case SurrogateFamily::kRandomForest: {
      json trees = json::array();
      for (const auto& t : model.forest.trees) trees.push_back(tree_to_json(t));
      j["forest"] = std::move(trees);
      break;
    }
  }
  return j;
}

inline SurrogateModel model_from_json(const json& j, SurrogateFamily family) {
  SurrogateModel model;
  model.family = family;
  model.holdout_r2 = j.at("holdout_r2").get<double>();
  model.train_rows = j.at("train_rows").get<int>();
  switch (family) {
    case SurrogateFamily::kNeuralNet:
      model.mlp = mlp_from_json(j.at("mlp"));
      break;
    case SurrogateFamily::kDecisionTree:
      model.tree = tree_from_json(j.at("tree"));
      break;
    case SurrogateFamily::kRandomForest:
      for (const json& t : j.at("forest"))
        model.forest.trees.push_back(tree_from_json(t));
      break;
  }
  return model;
}

inline SurrogateFamily family_from_name(const std::string& name) {
  if (name == "nn") return SurrogateFamily::kNeuralNet;
  if (name == "dt") return SurrogateFamily::kDecisionTree;
  if (name == "rf") return SurrogateFamily::kRandomForest;
  throw MalformedInput("family", "expected one of nn, dt, rf");
}

inline json bundle_to_json(const SurrogateBundle& bundle) {
  json j;
  j["version"] = "1";
  j["family"] = family_name(bundle.family);
  j["n_products"] = bundle.n_products;
  j["seed"] = bundle.seed;
  j["n_pair_samples"] = bundle.n_pair_samples;
  j["n_initial_samples"] = bundle.n_initial_samples;
  j["steady_conc"] = bundle.steady_conc;
  json pairs = json::array();
  for (int i = 0; i < bundle.n_products; ++i)
    for (int jj = 0; jj < bundle.n_products; ++jj) {
      if (i == jj) continue;
      const int p = bundle.pair_index(i, jj);
      pairs.push_back({{"from", i},
                       {"to", jj},
                       {"cost", model_to_json(bundle.pair_cost[p])},
                       {"lambda", model_to_json(bundle.pair_lambda[p])}});
    }
  j["pair_models"] = std::move(pairs);
  json init = json::array();
  for (int i = 0; i < bundle.n_products; ++i)
    init.push_back(
        {{"product", i},
         {"cost_lower", model_to_json(bundle.init_cost_lower[i])},
         {"cost_upper", model_to_json(bundle.init_cost_upper[i])},
         {"lambda_lower", model_to_json(bundle.init_lambda_lower[i])},
         {"lambda_upper", model_to_json(bundle.init_lambda_upper[i])}});
  j["initial_models"] = std::move(init);
  return j;
}

inline SurrogateBundle bundle_from_json(const json& j) {
  if (!j.contains("version") || j.at("version").get<std::string>() != "1")
    throw MalformedInput("bundle.version", "expected \"1\"");
  SurrogateBundle bundle;
  bundle.family = family_from_name(j.at("family").get<std::string>());
  bundle.n_products = j.at("n_products").get<int>();
  bundle.seed = j.at("seed").get<std::uint64_t>();
  bundle.n_pair_samples = j.at("n_pair_samples").get<int>();
  bundle.n_initial_samples = j.at("n_initial_samples").get<int>();
  bundle.steady_conc = j.at("steady_conc").get<std::vector<double>>();
  const int n = bundle.n_products;
  bundle.pair_cost.resize(n * (n - 1));
  bundle.pair_lambda.resize(n * (n - 1));
  bundle.init_cost_lower.resize(n);
  bundle.init_cost_upper.resize(n);
  bundle.init_lambda_lower.resize(n);
  bundle.init_lambda_upper.resize(n);
  for (const json& pj : j.at("pair_models")) {
    const int from = pj.at("from").get<int>(), to = pj.at("to").get<int>();
    const int p = bundle.pair_index(from, to);
    bundle.pair_cost[p] = model_from_json(pj.at("cost"), bundle.family);
    bundle.pair_lambda[p] = model_from_json(pj.at("lambda"), bundle.family);
  }
  for (const json& ij : j.at("initial_models")) {
    const int p = ij.at("product").get<int>();
    bundle.init_cost_lower[p] =
        model_from_json(ij.at("cost_lower"), bundle.family);
    bundle.init_cost_upper[p] =
        model_from_json(ij.at("cost_upper"), bundle.family);
    bundle.init_lambda_lower[p] =
        model_from_json(ij.at("lambda_lower"), bundle.family);
    bundle.init_lambda_upper[p] =
        model_from_json(ij.at("lambda_upper"), bundle.family);
  }
  return bundle;
}

inline void save_bundle(const std::string& path, const SurrogateBundle& b) {
  save_json(path, bundle_to_json(b));
}

inline SurrogateBundle load_bundle(const std::string& path) {
  return bundle_from_json(load_json(path));
}

// --- reports ----------------------------------------------------------------

inline std::string status_name(GbdStatus s) {
  switch (s) {
    case GbdStatus::kOptimal: return "optimal";
    case GbdStatus::kMasterInfeasible: return "infeasible";
    case GbdStatus::kIterationLimit: return "limit";
  }
  return "?";
}

inline json report_to_json(const SolveReport& r) {
  json j;
  j["algorithm"] = r.algorithm;
  j["status"] = status_name(r.status);
  j["objective"] = r.objective;
  j["true_objective"] = r.true_objective;
  if (std::isfinite(r.error_pct)) j["error_pct"] = r.error_pct;
  else j["error_pct"] = nullptr;
  j["iterations"] = r.iterations;
  j["nodes"] = r.nodes;
  j["cuts_generated"] = r.cuts_generated;
  j["cuts_applied"] = r.cuts_applied;
  j["subproblem_solves"] = r.subproblem_solves;
  j["wall_seconds"] = r.wall_seconds;
  json trace = json::array();
  for (const auto& [lo, hi] : r.bound_trace) trace.push_back({lo, hi});
  j["bound_trace"] = std::move(trace);
  return j;
}

inline json dataset_to_json(const Dataset& ds) {
  json feats = json::array();
  for (const auto& f : ds.features)
    feats.push_back(std::vector<double>(f.data(), f.data() + f.size()));
  return {{"dim", ds.dim}, {"features", feats}, {"labels", ds.labels}};
}

}  // namespace bmpc::io
