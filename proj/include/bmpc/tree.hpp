// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "bmpc/rng.hpp"

namespace bmpc {

// CART regression tree: axis-aligned splits by variance reduction, grown
// until leaves are pure. Nodes are stored in preorder; children by index.
struct RegressionTree {
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1, right = -1;
    double value = 0.0;
  };
  std::vector<Node> nodes;

  double predict(const Eigen::VectorXd& x) const {
    int at = 0;
    while (nodes[at].feature >= 0)
      at = x[nodes[at].feature] <= nodes[at].threshold ? nodes[at].left
                                                       : nodes[at].right;
    return nodes[at].value;
  }
};

struct TreeParams {
  int min_samples_split = 2;
  double min_variance = 1e-12;
};

namespace detail {

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double score = -1.0;  // sse reduction
};

inline int grow_tree(RegressionTree& tree,
                     const std::vector<Eigen::VectorXd>& X,
                     const std::vector<double>& y, std::vector<int>& idx,
                     int begin, int end, const TreeParams& params) {
  const int node_id = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  const int count = end - begin;
  double sum = 0.0, sq = 0.0;
  for (int s = begin; s < end; ++s) {
    sum += y[idx[s]];
    sq += y[idx[s]] * y[idx[s]];
  }
  const double mean = sum / count;
  const double var = sq / count - mean * mean;
  tree.nodes[node_id].value = mean;
  if (count < params.min_samples_split || var < params.min_variance)
    return node_id;

  const int dim = static_cast<int>(X[idx[begin]].size());
  SplitChoice best;
  const double parent_sse = sq - sum * sum / count;
  std::vector<int> sorted(idx.begin() + begin, idx.begin() + end);
  for (int f = 0; f < dim; ++f) {
    std::sort(sorted.begin(), sorted.end(), [&](int a, int b) {
      return X[a][f] < X[b][f] || (X[a][f] == X[b][f] && a < b);
    });
    double lsum = 0.0, lsq = 0.0;
    for (int s = 0; s + 1 < count; ++s) {
      const double yv = y[sorted[s]];
      lsum += yv;
      lsq += yv * yv;
      const double xl = X[sorted[s]][f], xr = X[sorted[s + 1]][f];
      if (xl == xr) continue;
      const int ln = s + 1, rn = count - ln;
      const double rsum = sum - lsum, rsq = sq - lsq;
      const double sse = (lsq - lsum * lsum / ln) + (rsq - rsum * rsum / rn);
      const double gain = parent_sse - sse;
      if (gain > best.score + 1e-15) {
        best.score = gain;
        best.feature = f;
        best.threshold = 0.5 * (xl + xr);
      }
    }
  }
  if (best.feature < 0) return node_id;  // all feature values identical

  const auto mid = std::partition(idx.begin() + begin, idx.begin() + end,
                                  [&](int s) {
                                    return X[s][best.feature] <= best.threshold;
                                  });
  const int split = static_cast<int>(mid - idx.begin());
  if (split == begin || split == end) return node_id;  // numeric degeneracy
  tree.nodes[node_id].feature = best.feature;
  tree.nodes[node_id].threshold = best.threshold;
  tree.nodes[node_id].left = grow_tree(tree, X, y, idx, begin, split, params);
  tree.nodes[node_id].right = grow_tree(tree, X, y, idx, split, end, params);
  return node_id;
}

}  // namespace detail

inline RegressionTree train_tree(const std::vector<Eigen::VectorXd>& features,
                                 const std::vector<double>& labels,
                                 TreeParams params = {}) {
  if (features.empty())
    throw std::invalid_argument("train_tree: empty dataset");
  RegressionTree tree;
  std::vector<int> idx(features.size());
  std::iota(idx.begin(), idx.end(), 0);
  detail::grow_tree(tree, features, labels, idx, 0,
                    static_cast<int>(idx.size()), params);
  return tree;
}

struct RandomForest {
  std::vector<RegressionTree> trees;

  double predict(const Eigen::VectorXd& x) const {
    double acc = 0.0;
    for (const auto& t : trees) acc += t.predict(x);
    return acc / static_cast<double>(trees.size());
  }
};

// Bootstrap-aggregated CART trees; with one or two features every split
// considers all features, so randomness enters through the resamples only.
inline RandomForest train_forest(const std::vector<Eigen::VectorXd>& features,
                                 const std::vector<double>& labels,
                                 int n_trees, std::uint64_t seed,
                                 bool bootstrap = true) {
  if (features.size() < 1)
    throw std::invalid_argument("train_forest: empty dataset");
  RandomForest forest;
  forest.trees.reserve(n_trees);
  Rng rng(seed);
  const std::size_t n = features.size();
  for (int t = 0; t < n_trees; ++t) {
    if (!bootstrap) {
      forest.trees.push_back(train_tree(features, labels));
      continue;
    }
    std::vector<Eigen::VectorXd> Xb(n);
    std::vector<double> yb(n);
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t pick = rng.below(n);
      Xb[s] = features[pick];
      yb[s] = labels[pick];
    }
    forest.trees.push_back(train_tree(Xb, yb));
  }
  return forest;
}

}  // namespace bmpc
