// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace bmpc {

// Isothermal CSTR with a single third-order consumption term:
//   dc/dt = (F/V) (c_feed - c) - k c^3
struct Plant {
  double volume = 5000.0;     // L
  double rate_const = 2.0;    // L^2 / (hr mol^2)
  double feed_conc = 1.0;     // mol/L
  double flow_lo = 0.0;       // L/hr
  double flow_hi = 3500.0;    // L/hr
};

inline double reactor_rhs(const Plant& plant, double conc, double flow) {
  return flow / plant.volume * (plant.feed_conc - conc) -
         plant.rate_const * conc * conc * conc;
}

// Unique steady-state concentration for a fixed inlet flow, from the cubic
// k c^3 + (F/V) c - (F/V) c_feed = 0 on (0, c_feed). Safeguarded Newton,
// residual below 1e-12.
inline double steady_state_concentration(const Plant& plant, double flow) {
  if (flow < 0.0)
    throw std::invalid_argument("steady_state_concentration: flow < 0");
  if (flow == 0.0) return 0.0;
  const double a = flow / plant.volume;
  auto g = [&](double c) {
    return plant.rate_const * c * c * c + a * c - a * plant.feed_conc;
  };
  double lo = 0.0, hi = plant.feed_conc;
  double c = 0.5 * plant.feed_conc;
  for (int it = 0; it < 200; ++it) {
    const double val = g(c);
    if (std::abs(val) <= 1e-12) return c;
    if (val > 0.0) hi = c;
    else lo = c;
    const double grad = 3.0 * plant.rate_const * c * c + a;
    double next = c - val / grad;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    c = next;
  }
  return c;
}

namespace detail {

inline double rk4_step(const Plant& plant, double x, double t, double h,
                       const std::function<double(double)>& flow) {
  const double k1 = reactor_rhs(plant, x, flow(t));
  const double k2 = reactor_rhs(plant, x + 0.5 * h * k1, flow(t + 0.5 * h));
  const double k3 = reactor_rhs(plant, x + 0.5 * h * k2, flow(t + 0.5 * h));
  const double k4 = reactor_rhs(plant, x + h * k3, flow(t + h));
  return x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace detail

// Classical RK4 on the reactor ODE under a time-varying inlet flow. Returns
// the states at the steps + 1 grid points spanning [0, horizon].
inline std::vector<double> simulate_rk4(
    const Plant& plant, double x0, const std::function<double(double)>& flow,
    double horizon, int steps) {
  if (steps < 1) throw std::invalid_argument("simulate_rk4: steps < 1");
  std::vector<double> traj(static_cast<std::size_t>(steps) + 1);
  traj[0] = x0;
  const double h = horizon / steps;
  double x = x0;
  for (int i = 0; i < steps; ++i) {
    x = detail::rk4_step(plant, x, i * h, h, flow);
    traj[static_cast<std::size_t>(i) + 1] = x;
  }
  return traj;
}

struct UnreachableTarget : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Smallest time to steer the state from x_start to x_ss under saturated
// flow (flow_hi when raising the concentration, flow_lo when draining).
// RK4 marching with a bisection refinement of the crossing step; accurate
// to about 1e-8 hr.
inline double min_transition_time(const Plant& plant, double x_start,
                                  double x_ss) {
  if (x_start == x_ss) return 0.0;
  const bool rising = x_ss > x_start;
  const double u_sat = rising ? plant.flow_hi : plant.flow_lo;
  const double limit = steady_state_concentration(plant, u_sat);
  if (rising ? x_ss >= limit - 1e-9 : x_ss <= limit + 1e-9)
    throw UnreachableTarget(
        "min_transition_time: target beyond the saturated steady state");

  auto flow = [u_sat](double) { return u_sat; };
  double t = 0.0, x = x_start;
  const double t_cap = 1e4;
  while (t < t_cap) {
    const double rate = std::abs(reactor_rhs(plant, x, u_sat));
    const double h =
        std::clamp(0.2 * std::abs(x - x_ss) / std::max(rate, 1e-12), 1e-6,
                   5e-3);
    const double x_next = detail::rk4_step(plant, x, t, h, flow);
    if ((x_next - x_ss > 0.0) != (x - x_ss > 0.0) || x_next == x_ss) {
      double lo = 0.0, hi = h;  // crossing inside this step
      for (int it = 0; it < 60 && hi - lo > 1e-10; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double xm = detail::rk4_step(plant, x, t, mid, flow);
        if ((xm - x_ss > 0.0) != (x - x_ss > 0.0) || xm == x_ss) hi = mid;
        else lo = mid;
      }
      return t + 0.5 * (lo + hi);
    }
    t += h;
    x = x_next;
  }
  throw UnreachableTarget("min_transition_time: no crossing before time cap");
}

}  // namespace bmpc
