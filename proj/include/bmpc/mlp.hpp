// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "bmpc/rng.hpp"

namespace bmpc {

// Fully connected rectifier network with a linear output, trained on
// standardized features and labels.
struct MlpRegressor {
  int input_dim = 1;
  std::vector<Eigen::MatrixXd> weights;  // layer l: out x in
  std::vector<Eigen::VectorXd> biases;
  Eigen::VectorXd feat_mean, feat_scale;
  double label_mean = 0.0, label_scale = 1.0;

  double predict(const Eigen::VectorXd& x) const {
    Eigen::VectorXd a(input_dim);
    for (int i = 0; i < input_dim; ++i)
      a[i] = (x[i] - feat_mean[i]) / feat_scale[i];
    for (std::size_t l = 0; l < weights.size(); ++l) {
      a = (weights[l] * a + biases[l]).eval();
      if (l + 1 < weights.size()) a = a.cwiseMax(0.0);
    }
    return a[0] * label_scale + label_mean;
  }
};

struct MlpConfig {
  std::vector<int> hidden = {50, 50, 50};
  double learning_rate = 1e-4;  // constant
  double l2 = 1e-4;
  int max_iterations = 10000;        // epochs
  int no_improvement_limit = 1000;   // epochs without loss progress
  int batch_size = 200;
};

namespace detail {

// Loss (0.5 mse + 0.5 l2/n |W|^2) and its gradient for one batch; the
// layout of grads mirrors weights/biases.
inline double mlp_loss_grad(const std::vector<Eigen::MatrixXd>& weights,
                            const std::vector<Eigen::VectorXd>& biases,
                            const Eigen::MatrixXd& X,  // in x batch
                            const Eigen::VectorXd& y, double l2, int n_total,
                            std::vector<Eigen::MatrixXd>* wgrad,
                            std::vector<Eigen::VectorXd>* bgrad) {
  const int L = static_cast<int>(weights.size());
  const int B = static_cast<int>(X.cols());
  std::vector<Eigen::MatrixXd> act(L + 1);
  act[0] = X;
  for (int l = 0; l < L; ++l) {
    act[l + 1] = (weights[l] * act[l]).colwise() + biases[l];
    if (l + 1 < L) act[l + 1] = act[l + 1].cwiseMax(0.0);
  }
  const Eigen::RowVectorXd out = act[L].row(0);
  const Eigen::RowVectorXd err = out - y.transpose();
  double loss = 0.5 * err.squaredNorm() / B;
  for (const auto& W : weights) loss += 0.5 * l2 * W.squaredNorm() / n_total;

  if (wgrad) {
    Eigen::MatrixXd delta = err / B;  // 1 x B
    for (int l = L - 1; l >= 0; --l) {
      (*wgrad)[l] = delta * act[l].transpose() + (l2 / n_total) * weights[l];
      (*bgrad)[l] = delta.rowwise().sum();
      if (l > 0) {
        delta = (weights[l].transpose() * delta).eval();
        delta = delta.cwiseProduct(
            (act[l].array() > 0.0).cast<double>().matrix());
      }
    }
  }
  return loss;
}

}  // namespace detail

// Adam on mini-batches with a seeded shuffle; stops after
// no_improvement_limit epochs without progress on the epoch loss.
inline MlpRegressor train_mlp(const std::vector<Eigen::VectorXd>& features,
                              const std::vector<double>& labels,
                              std::uint64_t seed, MlpConfig cfg = {}) {
  const int n = static_cast<int>(features.size());
  if (n < 2) throw std::invalid_argument("train_mlp: need at least 2 rows");
  const int d = static_cast<int>(features[0].size());

  MlpRegressor net;
  net.input_dim = d;
  net.feat_mean = Eigen::VectorXd::Zero(d);
  net.feat_scale = Eigen::VectorXd::Ones(d);
  for (const auto& f : features) net.feat_mean += f;
  net.feat_mean /= n;
  for (int i = 0; i < d; ++i) {
    double var = 0.0;
    for (const auto& f : features) {
      const double dd = f[i] - net.feat_mean[i];
      var += dd * dd;
    }
    net.feat_scale[i] = std::max(std::sqrt(var / n), 1e-12);
  }
  double lm = 0.0, lv = 0.0;
  for (double v : labels) lm += v;
  lm /= n;
  for (double v : labels) lv += (v - lm) * (v - lm);
  net.label_mean = lm;
  net.label_scale = std::max(std::sqrt(lv / n), 1e-12);

  Eigen::MatrixXd X(d, n);
  Eigen::VectorXd y(n);
  for (int s = 0; s < n; ++s) {
    for (int i = 0; i < d; ++i)
      X(i, s) = (features[s][i] - net.feat_mean[i]) / net.feat_scale[i];
    y[s] = (labels[s] - net.label_mean) / net.label_scale;
  }

  // Glorot-uniform init
  Rng rng(seed);
  std::vector<int> sizes;
  sizes.push_back(d);
  for (int h : cfg.hidden) sizes.push_back(h);
  sizes.push_back(1);
  const int L = static_cast<int>(sizes.size()) - 1;
  net.weights.resize(L);
  net.biases.resize(L);
  for (int l = 0; l < L; ++l) {
    const double bound = std::sqrt(6.0 / (sizes[l] + sizes[l + 1]));
    net.weights[l].resize(sizes[l + 1], sizes[l]);
    for (int r = 0; r < sizes[l + 1]; ++r)
      for (int c = 0; c < sizes[l]; ++c)
        net.weights[l](r, c) = rng.uniform(-bound, bound);
    net.biases[l] = Eigen::VectorXd::Zero(sizes[l + 1]);
  }

  std::vector<Eigen::MatrixXd> mW(L), vW(L), gW(L);
  std::vector<Eigen::VectorXd> mB(L), vB(L), gB(L);
  for (int l = 0; l < L; ++l) {
    mW[l] = Eigen::MatrixXd::Zero(sizes[l + 1], sizes[l]);
    vW[l] = mW[l];
    gW[l] = mW[l];
    mB[l] = Eigen::VectorXd::Zero(sizes[l + 1]);
    vB[l] = mB[l];
    gB[l] = mB[l];
  }

  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const int batch = std::min(cfg.batch_size, n);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  double best_loss = std::numeric_limits<double>::infinity();
  int since_best = 0;
  long step = 0;
  for (int epoch = 0; epoch < cfg.max_iterations; ++epoch) {
    // seeded Fisher-Yates
    for (int i = n - 1; i > 0; --i)
      std::swap(order[i], order[rng.below(static_cast<std::uint64_t>(i + 1))]);

    double epoch_loss = 0.0;
    int batches = 0;
    for (int start = 0; start < n; start += batch) {
      const int b = std::min(batch, n - start);
      Eigen::MatrixXd Xb(d, b);
      Eigen::VectorXd yb(b);
      for (int s = 0; s < b; ++s) {
        Xb.col(s) = X.col(order[start + s]);
        yb[s] = y[order[start + s]];
      }
      epoch_loss += detail::mlp_loss_grad(net.weights, net.biases, Xb, yb,
                                          cfg.l2, n, &gW, &gB);
      ++batches;
      ++step;
      const double corr =
          std::sqrt(1.0 - std::pow(b2, step)) / (1.0 - std::pow(b1, step));
      for (int l = 0; l < L; ++l) {
        mW[l] = b1 * mW[l] + (1.0 - b1) * gW[l];
        vW[l] = b2 * vW[l] + (1.0 - b2) * gW[l].cwiseProduct(gW[l]);
        net.weights[l] -=
            cfg.learning_rate * corr *
            mW[l].cwiseQuotient((vW[l].cwiseSqrt().array() + eps).matrix());
        mB[l] = b1 * mB[l] + (1.0 - b1) * gB[l];
        vB[l] = b2 * vB[l] + (1.0 - b2) * gB[l].cwiseProduct(gB[l]);
        net.biases[l] -=
            cfg.learning_rate * corr *
            mB[l].cwiseQuotient((vB[l].cwiseSqrt().array() + eps).matrix());
      }
    }
    epoch_loss /= batches;
    if (!std::isfinite(epoch_loss))
      throw std::runtime_error("train_mlp: loss diverged");
    if (epoch_loss < best_loss - 1e-10) {
      best_loss = epoch_loss;
      since_best = 0;
    } else if (++since_best >= cfg.no_improvement_limit) {
      break;
    }
  }
  return net;
}

}  // namespace bmpc
