// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace bmpc {

// Radau collocation data on the unit element (0, 1]. gamma holds the
// abscissae in increasing order with gamma.back() == 1; omega(m, c) is the
// running integral of the m-th Lagrange basis polynomial over [0, gamma_c],
// so the last column carries the quadrature weights.
struct CollocationGrid {
  int n_fe = 0;
  int n_c = 0;
  std::vector<double> gamma;
  Eigen::MatrixXd omega;

  double weight(int c) const { return omega(c, n_c - 1); }
};

namespace detail {

// Coefficients (ascending powers) of the Lagrange basis polynomial for node
// m over the given abscissae.
inline std::vector<double> lagrange_coeffs(const std::vector<double>& nodes,
                                           int m) {
  std::vector<double> coef{1.0};
  double denom = 1.0;
  for (std::size_t j = 0; j < nodes.size(); ++j) {
    if (static_cast<int>(j) == m) continue;
    denom *= nodes[m] - nodes[j];
    std::vector<double> next(coef.size() + 1, 0.0);
    for (std::size_t p = 0; p < coef.size(); ++p) {
      next[p] -= coef[p] * nodes[j];
      next[p + 1] += coef[p];
    }
    coef = std::move(next);
  }
  for (double& c : coef) c /= denom;
  return coef;
}

}  // namespace detail

// Right-Radau abscissae and the running-integral matrix for n collocation
// points. Supported orders are 1 (implicit Euler), 2 and 3.
inline std::pair<std::vector<double>, Eigen::MatrixXd> radau_points(int n) {
  std::vector<double> gamma;
  switch (n) {
    case 1:
      gamma = {1.0};
      break;
    case 2:
      gamma = {1.0 / 3.0, 1.0};
      break;
    case 3: {
      const double s6 = std::sqrt(6.0);
      gamma = {(4.0 - s6) / 10.0, (4.0 + s6) / 10.0, 1.0};
      break;
    }
    default:
      throw std::invalid_argument("radau_points: unsupported order " +
                                  std::to_string(n));
  }

  Eigen::MatrixXd omega(n, n);
  for (int m = 0; m < n; ++m) {
    const std::vector<double> coef = detail::lagrange_coeffs(gamma, m);
    for (int c = 0; c < n; ++c) {
      double integral = 0.0;
      double power = gamma[c];
      for (std::size_t p = 0; p < coef.size(); ++p) {
        integral += coef[p] * power / static_cast<double>(p + 1);
        power *= gamma[c];
      }
      omega(m, c) = integral;
    }
  }
  return {std::move(gamma), std::move(omega)};
}

inline CollocationGrid make_grid(int n_fe, int n_c) {
  if (n_fe < 1) throw std::invalid_argument("make_grid: n_fe must be >= 1");
  CollocationGrid grid;
  grid.n_fe = n_fe;
  grid.n_c = n_c;
  auto [gamma, omega] = radau_points(n_c);
  grid.gamma = std::move(gamma);
  grid.omega = std::move(omega);
  return grid;
}

}  // namespace bmpc
