/*
 * Copyright 2026 The peeroff Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef PEEROFF_ORACLE_HPP
#define PEEROFF_ORACLE_HPP

// Reference minimizer for small instances. It shares no code with the KKT
// solver: the reduced problem is written over outbound/inbound volumes
//   out_i in [0, phi_i], in_i >= 0, sum out = sum in,
//   w_i = phi_i - out_i + in_i, lambda = sum out,
// and minimized by exact line searches along pairwise directions that keep
// the flow equation satisfied.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "peeroff/error.hpp"
#include "peeroff/model.hpp"

namespace peeroff {

struct OracleOptions {
  double sweep_tolerance = 1e-15;  // relative objective decrease per sweep
  int max_sweeps = 200000;
  double stability_margin = kStabilityMargin;
  std::vector<double> workload_caps;
  bool grid_check = true;           // second, independent check for N = 2
  double grid_step_fraction = 1e-3;
  double agreement = 1e-8;          // allowed gap between the two methods
};

struct OracleResult {
  Allocation allocation;
  double objective = 0.0;  // decision-dependent part
  int sweeps = 0;
  double grid_objective = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

class ReducedProblem {
 public:
  ReducedProblem(const NetworkConfig& cfg, const SlotState& st, const OracleOptions& opt)
      : n_(cfg.n_sbs()), v_(cfg.control_v), tau_(cfg.lan_delay), phi_(st.arrivals),
        mu_(cfg.service_rates), price_(n_), hi_(n_) {
    for (std::size_t i = 0; i < n_; ++i) {
      price_[i] = cfg.energy_per_task * st.deficits[i] * cfg.slot_duration;
      hi_[i] = (1.0 - opt.stability_margin) * mu_[i];
      if (!opt.workload_caps.empty()) hi_[i] = std::min(hi_[i], std::max(0.0, opt.workload_caps[i]));
    }
    lan_hi_ = (1.0 - opt.stability_margin) / tau_;
  }

  std::size_t n() const { return n_; }
  double phi(std::size_t i) const { return phi_[i]; }
  double hi(std::size_t i) const { return hi_[i]; }
  double lan_hi() const { return lan_hi_; }

  double station_cost(std::size_t i, double w) const {
    if (w >= mu_[i]) return std::numeric_limits<double>::infinity();
    return v_ * w / (mu_[i] - w) + price_[i] * w;
  }
  double station_slope(std::size_t i, double w) const {
    const double gap = mu_[i] - w;
    return v_ * mu_[i] / (gap * gap) + price_[i];
  }
  double lan_cost(double l) const {
    if (tau_ * l >= 1.0) return std::numeric_limits<double>::infinity();
    return v_ * tau_ * l / (1.0 - tau_ * l);
  }
  double lan_slope(double l) const {
    const double gap = 1.0 - tau_ * l;
    return v_ * tau_ / (gap * gap);
  }

 private:
  std::size_t n_;
  double v_, tau_;
  std::vector<double> phi_, mu_, price_, hi_;
  double lan_hi_ = 0.0;
};

class PairwiseDescent {
 public:
  explicit PairwiseDescent(const ReducedProblem& p) : p_(p), out_(p.n(), 0.0), in_(p.n(), 0.0) {
    start();
  }

  double objective() const {
    double f = 0.0;
    for (std::size_t i = 0; i < p_.n(); ++i) f += p_.station_cost(i, w(i));
    return f + p_.lan_cost(lambda());
  }

  double w(std::size_t i) const { return p_.phi(i) - out_[i] + in_[i]; }
  double lambda() const {
    double l = 0.0;
    for (double o : out_) l += o;
    return l;
  }

  int run(double tol, int max_sweeps) {
    const std::size_t n = p_.n();
    double f = objective();
    for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          if (i != j) {
            line_search(Move{i, j, Move::OutOut});
            line_search(Move{i, j, Move::InIn});
          }
          line_search(Move{i, j, Move::OutIn});
        }
      const double g = objective();
      if (f - g <= tol * (1.0 + std::abs(g))) return sweep;
      f = g;
    }
    throw SolverError("oracle: pairwise descent did not converge");
  }

 private:
  // OutOut: out_i += t, out_j -= t.  InIn: in_i += t, in_j -= t.
  // OutIn: out_i += t, in_j += t.
  struct Move {
    std::size_t i, j;
    enum Kind { OutOut, InIn, OutIn } kind;
  };

  void start() {
    // Overloaded stations push their excess to stations with headroom.
    const std::size_t n = p_.n();
    double excess = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      out_[i] = std::max(0.0, p_.phi(i) - p_.hi(i));
      excess += out_[i];
    }
    for (std::size_t j = 0; j < n && excess > 0.0; ++j) {
      const double room = std::max(0.0, p_.hi(j) - w(j));
      const double take = std::min(room, excess);
      in_[j] += take;
      excess -= take;
    }
    if (excess > 1e-12 || lambda() > p_.lan_hi())
      throw FeasibilityError("stability", "oracle: no feasible starting point");
  }

  void apply(const Move& m, double t) {
    switch (m.kind) {
      case Move::OutOut: out_[m.i] += t; out_[m.j] -= t; break;
      case Move::InIn: in_[m.i] += t; in_[m.j] -= t; break;
      case Move::OutIn: out_[m.i] += t; in_[m.j] += t; break;
    }
  }

  // Derivative of the objective along the move direction at step t.
  double slope(const Move& m, double t) {
    apply(m, t);
    double s = 0.0;
    const double ds_out_i = -p_.station_slope(m.i, w(m.i)) + p_.lan_slope(lambda());
    switch (m.kind) {
      case Move::OutOut:
        s = -p_.station_slope(m.i, w(m.i)) + p_.station_slope(m.j, w(m.j));
        break;
      case Move::InIn:
        s = p_.station_slope(m.i, w(m.i)) - p_.station_slope(m.j, w(m.j));
        break;
      case Move::OutIn:
        s = ds_out_i + p_.station_slope(m.j, w(m.j));
        break;
    }
    apply(m, -t);
    return s;
  }

  // Feasible step interval [lo, hi] containing 0.
  void range(const Move& m, double& lo, double& hi) const {
    lo = -std::numeric_limits<double>::infinity();
    hi = std::numeric_limits<double>::infinity();
    auto var = [&](double value, double vmin, double vmax, double coef) {
      // vmin <= value + coef t <= vmax
      if (coef > 0) {
        lo = std::max(lo, (vmin - value) / coef);
        hi = std::min(hi, (vmax - value) / coef);
      } else if (coef < 0) {
        lo = std::max(lo, (vmax - value) / coef);
        hi = std::min(hi, (vmin - value) / coef);
      }
    };
    const double inf = std::numeric_limits<double>::infinity();
    const std::size_t i = m.i, j = m.j;
    switch (m.kind) {
      case Move::OutOut:
        var(out_[i], 0.0, p_.phi(i), 1.0);
        var(out_[j], 0.0, p_.phi(j), -1.0);
        var(w(i), -inf, p_.hi(i), -1.0);
        var(w(j), -inf, p_.hi(j), 1.0);
        break;
      case Move::InIn:
        var(in_[i], 0.0, inf, 1.0);
        var(in_[j], 0.0, inf, -1.0);
        var(w(i), -inf, p_.hi(i), 1.0);
        var(w(j), -inf, p_.hi(j), -1.0);
        break;
      case Move::OutIn:
        var(out_[i], 0.0, p_.phi(i), 1.0);
        var(in_[j], 0.0, inf, 1.0);
        if (i != j) {
          var(w(i), -inf, p_.hi(i), -1.0);
          var(w(j), -inf, p_.hi(j), 1.0);
        }
        var(lambda(), 0.0, p_.lan_hi(), 1.0);
        break;
    }
    lo = std::min(lo, 0.0);
    hi = std::max(hi, 0.0);
  }

  void line_search(const Move& m) {
    double lo, hi;
    range(m, lo, hi);
    if (hi - lo <= 0.0) return;
    double t;
    if (slope(m, lo) >= 0.0) {
      t = lo;
    } else if (slope(m, hi) <= 0.0) {
      t = hi;
    } else {
      double a = lo, b = hi;
      for (int k = 0; k < 200 && b - a > 0.0; ++k) {
        const double mid = 0.5 * (a + b);
        if (mid <= a || mid >= b) break;
        if (slope(m, mid) > 0.0) b = mid; else a = mid;
      }
      t = 0.5 * (a + b);
    }
    if (t == 0.0) return;
    const double before = objective();
    apply(m, t);
    for (std::size_t k = 0; k < p_.n(); ++k) {
      out_[k] = std::clamp(out_[k], 0.0, p_.phi(k));
      in_[k] = std::max(in_[k], 0.0);
    }
    if (!(objective() <= before)) apply(m, -t);
  }

  const ReducedProblem& p_;
  std::vector<double> out_, in_;
};

// Two stations: w_1 = phi_1 - x, w_2 = phi_2 + x, lambda = |x|.
inline double two_station_grid(const ReducedProblem& p, double step_fraction, double& best_x) {
  const double total = p.phi(0) + p.phi(1);
  auto f = [&](double x) {
    const double w0 = p.phi(0) - x, w1 = p.phi(1) + x, l = std::abs(x);
    if (w0 > p.hi(0) || w1 > p.hi(1) || l > p.lan_hi()) return std::numeric_limits<double>::infinity();
    return p.station_cost(0, w0) + p.station_cost(1, w1) + p.lan_cost(l);
  };
  const double lo = -p.phi(1), hi = p.phi(0);
  const double step = std::max(step_fraction * total, 1e-12);
  double bx = 0.0, bf = f(0.0);
  for (double x = lo; x <= hi; x += step) {
    const double v = f(x);
    if (v < bf) { bf = v; bx = x; }
  }
  if (f(hi) < bf) { bf = f(hi); bx = hi; }
  // Golden-section refinement inside the best cell on either side of zero.
  auto refine = [&](double a, double b) {
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - r * (b - a), d = a + r * (b - a);
    double fc = f(c), fd = f(d);
    for (int k = 0; k < 300 && b - a > 1e-15 * (1.0 + std::abs(a)); ++k) {
      if (fc < fd) { b = d; d = c; fd = fc; c = b - r * (b - a); fc = f(c); }
      else { a = c; c = d; fc = fd; d = a + r * (b - a); fd = f(d); }
    }
    const double x = 0.5 * (a + b);
    const double v = f(x);
    if (v < bf) { bf = v; bx = x; }
  };
  const double a = std::max(lo, bx - step), b = std::min(hi, bx + step);
  if (a < 0.0 && b > 0.0) {
    refine(a, 0.0);
    refine(0.0, b);
  } else {
    refine(a, b);
  }
  best_x = bx;
  return bf;
}

}  // namespace detail

inline OracleResult brute_force_oracle(const NetworkConfig& cfg, const SlotState& st,
                                       const OracleOptions& opt = {}) {
  cfg.validate();
  st.validate(cfg.n_sbs());
  if (cfg.n_sbs() > 5) throw ParameterError("oracle is limited to at most 5 SBSs");
  const detail::ReducedProblem p(cfg, st, opt);
  detail::PairwiseDescent d(p);
  OracleResult r;
  r.sweeps = d.run(opt.sweep_tolerance, opt.max_sweeps);
  r.objective = d.objective();
  r.allocation.post_workloads.resize(p.n());
  r.allocation.categories.resize(p.n());
  for (std::size_t i = 0; i < p.n(); ++i) r.allocation.post_workloads[i] = d.w(i);
  r.allocation.lan_traffic = d.lambda();

  if (opt.grid_check && p.n() == 2) {
    double x = 0.0;
    r.grid_objective = detail::two_station_grid(p, opt.grid_step_fraction, x);
    if (std::abs(r.grid_objective - r.objective) > opt.agreement * (1.0 + std::abs(r.objective)))
      throw SolverError("oracle: descent objective " + std::to_string(r.objective) +
                        " disagrees with grid objective " + std::to_string(r.grid_objective));
    if (r.grid_objective < r.objective) {
      r.objective = r.grid_objective;
      r.allocation.post_workloads = {p.phi(0) - x, p.phi(1) + x};
      r.allocation.lan_traffic = std::abs(x);
    }
  }
  for (std::size_t i = 0; i < p.n(); ++i) {
    const double w = r.allocation.post_workloads[i];
    const double scale = 1e-9 * std::max(1.0, p.phi(i));
    r.allocation.categories[i] = w > p.phi(i) + scale   ? Category::Sink
                                 : w < p.phi(i) - scale ? Category::Source
                                                        : Category::Neutral;
  }
  return r;
}

}  // namespace peeroff

#endif  // PEEROFF_ORACLE_HPP
