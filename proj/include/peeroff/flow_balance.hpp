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

#ifndef PEEROFF_FLOW_BALANCE_HPP
#define PEEROFF_FLOW_BALANCE_HPP

// Water-filling on a Lagrange multiplier under the workload flow equation.
//
// Every node carries a convex cost whose marginal is
//     m_k(x) = V * cap_k / (cap_k - x)^2 + price_k,
// and the LAN adds a convex congestion cost whose marginal is V * g(lambda).
// For a multiplier alpha, a node whose pre-offloading marginal xi_k is below
// alpha absorbs load until m_k(x) = alpha; a node whose xi_k exceeds
// alpha + V g(lambda) sheds load until m_k(x) = alpha + V g(lambda) (or x = 0).
// The inbound flow lambda_S(alpha) grows with alpha and the outbound flow
// lambda_R(alpha) shrinks, so alpha is located by bisection.
//
// The centralized solver uses one node per SBS (each may send or receive).
// The best response of SBS i uses i as the only sender and every peer j as a
// receiver with residual capacity mu_ij.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "peeroff/error.hpp"
#include "peeroff/model.hpp"

namespace peeroff {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kAlphaRelTol = 1e-12;

struct FlowNode {
  double reference = 0.0;     // load before offloading
  double capacity = 0.0;      // service rate in the marginal
  double upper = 0.0;         // largest admissible load
  double energy_price = 0.0;  // kappa * q * slot_scale
  bool can_receive = true;
  bool can_send = true;
};

// V * g(lambda) with g(lambda) = tau * H / (H - tau lambda)^2. H = 1 for the
// whole LAN; H = Lambda_{-i} when the other SBSs' traffic is fixed.
struct CongestionModel {
  double tau = 0.2;
  double headroom = 1.0;
  double limit = 0.0;  // largest admissible lambda
};

struct FlowEvaluation {
  double alpha = 0.0;
  double lambda_in = 0.0;   // lambda_S
  double lambda_out = 0.0;  // lambda_R
  std::vector<double> load;
  std::vector<Category> categories;

  double gap() const { return lambda_in - lambda_out; }
};

struct FlowSolution {
  std::vector<double> load;
  std::vector<Category> categories;
  double alpha = 0.0;
  double lambda = 0.0;
  double lan_shadow = 0.0;  // extra sender price while lambda sits at the LAN limit
  double flow_gap = 0.0;  // |lambda_S - lambda_R| before the final rebalance
  int iterations = 0;
  bool early_exit = false;
};

class FlowBalance {
 public:
  FlowBalance(std::vector<FlowNode> nodes, CongestionModel lan, double v)
      : nodes_(std::move(nodes)), lan_(lan), v_(v) {
    if (!(v_ > 0.0))
      throw ParameterError("control parameter V must be positive for the KKT solve");
    for (auto& nd : nodes_) {
      nd.upper = std::max(0.0, std::min(nd.upper, nd.capacity));
      if (!(nd.capacity > 0.0) || nd.upper <= 0.0) nd.can_receive = false;
    }
  }

  std::size_t size() const { return nodes_.size(); }
  const FlowNode& node(std::size_t k) const { return nodes_[k]; }
  double v() const { return v_; }

  double marginal(std::size_t k, double x) const {
    const auto& nd = nodes_[k];
    if (!(x < nd.capacity)) return kInf;
    const double gap = nd.capacity - x;
    return v_ * nd.capacity / (gap * gap) + nd.energy_price;
  }

  // Load at which the marginal equals y, clamped at zero from below.
  double inverse(std::size_t k, double y) const {
    const auto& nd = nodes_[k];
    if (y == kInf) return nd.capacity;
    const double scaled = (y - nd.energy_price) / v_;
    if (!(scaled * nd.capacity > 1.0)) return 0.0;
    return inverse_marginal_comp_delay(scaled, nd.capacity);
  }

  double pre_marginal(std::size_t k) const {
    return marginal(k, nodes_[k].reference);
  }

  double lan_marginal(double lambda) const {
    const double gap = lan_.headroom - lan_.tau * lambda;
    if (!(gap > 0.0)) return kInf;
    return v_ * lan_.tau * lan_.headroom / (gap * gap);
  }

  double forced_outflow() const {
    double f = 0.0;
    for (const auto& nd : nodes_) f += std::max(0.0, nd.reference - nd.upper);
    return f;
  }

  // Classifies every node for a given multiplier. Receivers are settled
  // first; senders then use lambda_guess (default: the receivers' inflow).
  FlowEvaluation evaluate(double alpha,
                          std::optional<double> lambda_guess = std::nullopt) const {
    const std::size_t n = nodes_.size();
    FlowEvaluation e;
    e.alpha = alpha;
    e.load.assign(n, 0.0);
    e.categories.assign(n, Category::Neutral);
    std::vector<bool> settled(n, false);

    for (std::size_t k = 0; k < n; ++k) {
      const auto& nd = nodes_[k];
      if (nd.can_receive && pre_marginal(k) < alpha) {
        const double x = std::min(inverse(k, alpha), nd.upper);
        e.load[k] = x;
        settled[k] = true;
        if (x > nd.reference) e.lambda_in += x - nd.reference;
      }
    }
    const double lan_price = lan_marginal(lambda_guess.value_or(e.lambda_in));
    for (std::size_t k = 0; k < n; ++k) {
      if (settled[k]) continue;
      const auto& nd = nodes_[k];
      const double xi = pre_marginal(k);
      double x = nd.reference;
      if (nd.can_send && xi > alpha + lan_price) x = inverse(k, alpha + lan_price);
      e.load[k] = std::min(x, nd.upper);
    }
    for (std::size_t k = 0; k < n; ++k) {
      const double ref = nodes_[k].reference;
      if (e.load[k] > ref) {
        e.categories[k] = Category::Sink;
      } else if (e.load[k] < ref) {
        e.categories[k] = Category::Source;
        e.lambda_out += ref - e.load[k];
      }
    }
    return e;
  }

  FlowSolution solve(double tolerance = 1e-6, int max_iterations = 200) const {
    const std::size_t n = nodes_.size();
    double recv_min = kInf;
    double send_max = -kInf;
    bool unbounded_sender = false;
    for (std::size_t k = 0; k < n; ++k) {
      const auto& nd = nodes_[k];
      const double xi = pre_marginal(k);
      if (nd.can_receive) recv_min = std::min(recv_min, xi);
      if (nd.reference > nd.upper) {
        if (!nd.can_send)
          throw FeasibilityError("stability", "node " + std::to_string(k) +
                                                  " is over its limit and cannot shed load");
        unbounded_sender = true;
      }
      if (nd.can_send) {
        if (xi == kInf) unbounded_sender = true;
        else send_max = std::max(send_max, xi);
      }
    }

    FlowSolution out;
    auto settle_no_offload = [&] {
      out.load.resize(n);
      out.categories.assign(n, Category::Neutral);
      for (std::size_t k = 0; k < n; ++k) out.load[k] = nodes_[k].reference;
      out.early_exit = true;
    };

    if (recv_min == kInf) {
      if (forced_outflow() > 0.0)
        throw FeasibilityError("stability", "overloaded node but no node can receive");
      settle_no_offload();
      return out;
    }
    if (!unbounded_sender && (send_max == -kInf || recv_min + lan_marginal(0.0) >= send_max)) {
      settle_no_offload();
      return out;
    }
    if (!(forced_outflow() <= lan_.limit * (1.0 + 1e-12) + 1e-12))
      throw FeasibilityError("lan-stability", "forced outflow exceeds the LAN limit");

    double a = recv_min;
    double gap_a = evaluate(a).gap();
    double b = std::max(a, send_max == -kInf ? a : send_max);
    FlowEvaluation eb = evaluate(b);
    for (int grow = 0; eb.gap() < 0.0; ++grow) {
      if (grow > 400)
        throw SolverError("flow balance: could not bracket the multiplier");
      const double prev_in = eb.lambda_in;
      b += std::max({b - a, std::abs(b), 1.0});
      eb = evaluate(b);
      if (grow > 50 && eb.lambda_in <= prev_in && eb.gap() < 0.0)
        throw FeasibilityError("stability", "receivers cannot absorb the forced outflow");
    }
    double gap_b = eb.gap();

    FlowEvaluation e = eb;
    bool converged = gap_a == 0.0 || gap_b == 0.0;
    if (gap_a == 0.0) e = evaluate(a);
    int it = 0;
    while (!converged && it < max_iterations) {
      ++it;
      const double alpha = 0.5 * (a + b);
      e = evaluate(alpha);
      const double g = e.gap();
      const double slack = tolerance;
      if (g < gap_a - slack || g > gap_b + slack)
        throw SolverError("flow balance: lambda_S - lambda_R is not monotone in alpha");
      // Flow balance alone leaves the multiplier loose where the marginals
      // are steep, so the bracket must also be tight before stopping.
      if (std::abs(g) < tolerance && b - a <= kAlphaRelTol * std::abs(alpha)) {
        converged = true;
        break;
      }
      if (g > 0.0) {
        b = alpha;
        gap_b = g;
      } else {
        a = alpha;
        gap_a = g;
      }
      if (b - a <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(a), std::abs(b))) {
        converged = std::abs(g) < tolerance;
        break;
      }
    }
    if (!converged) {
      double scale = 0.0;
      for (const auto& nd : nodes_) scale += nd.reference;
      if (std::abs(e.gap()) > std::max(tolerance, 1e-9 * scale))
        throw SolverError("flow balance did not converge: |lambda_S - lambda_R| = " +
                          std::to_string(std::abs(e.gap())) + " after " +
                          std::to_string(it) + " iterations, alpha = " +
                          std::to_string(e.alpha));
    }

    out.alpha = e.alpha;
    out.flow_gap = std::abs(e.gap());
    out.iterations = it;
    out.load = e.load;
    finish(out);
    if (out.lambda > lan_.limit) return solve_at_limit(out.alpha, tolerance, max_iterations);
    return out;
  }

  // Largest relative deviation from the KKT conditions of the solution.
  // Bound-constrained nodes (x = 0 or x = upper) are exempt from equality.
  double kkt_violation(const FlowSolution& s) const {
    if (s.early_exit) {
      double worst = 0.0;
      double lo = kInf, hi = -kInf;
      for (std::size_t k = 0; k < nodes_.size(); ++k) {
        if (nodes_[k].can_receive) lo = std::min(lo, pre_marginal(k));
        if (nodes_[k].can_send) hi = std::max(hi, pre_marginal(k));
      }
      if (lo != kInf && hi != -kInf) {
        const double thr = lo + lan_marginal(0.0);
        if (hi > thr) worst = (hi - thr) / thr;
      }
      return worst;
    }
    if (!(s.lan_shadow >= 0.0)) return kInf;
    const double price_in = s.alpha;
    const double price_out = s.alpha + lan_marginal(s.lambda) + s.lan_shadow;
    double worst = 0.0;
    auto rel = [](double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); };
    for (std::size_t k = 0; k < nodes_.size(); ++k) {
      const auto& nd = nodes_[k];
      const double x = s.load[k];
      const bool at_upper = x >= nd.upper * (1.0 - 1e-12);
      const bool at_zero = x <= 0.0;
      switch (s.categories[k]) {
        case Category::Sink:
          if (!at_upper) worst = std::max(worst, rel(marginal(k, x), price_in));
          break;
        case Category::Source:
          if (!at_upper && !at_zero) worst = std::max(worst, rel(marginal(k, x), price_out));
          if (at_zero && marginal(k, 0.0) < price_out)
            worst = std::max(worst, rel(marginal(k, 0.0), price_out));
          break;
        case Category::Neutral: {
          const double xi = pre_marginal(k);
          if (nd.can_receive && xi < price_in) worst = std::max(worst, rel(xi, price_in));
          if (nd.can_send && xi > price_out) worst = std::max(worst, rel(xi, price_out));
          break;
        }
      }
    }
    return worst;
  }

 private:
  void finish(FlowSolution& out) const {
    rebalance(out.load);
    out.categories.assign(nodes_.size(), Category::Neutral);
    out.lambda = 0.0;
    for (std::size_t k = 0; k < nodes_.size(); ++k) {
      const double ref = nodes_[k].reference;
      if (out.load[k] > ref) out.categories[k] = Category::Sink;
      else if (out.load[k] < ref) {
        out.categories[k] = Category::Source;
        out.lambda += ref - out.load[k];
      }
    }
  }

  // Receivers' inflow at price y.
  double inflow(double y, std::vector<double>* load) const {
    double f = 0.0;
    for (std::size_t k = 0; k < nodes_.size(); ++k) {
      const auto& nd = nodes_[k];
      if (!nd.can_receive || !(pre_marginal(k) < y)) continue;
      const double x = std::min(inverse(k, y), nd.upper);
      if (load) (*load)[k] = x;
      f += std::max(0.0, x - nd.reference);
    }
    return f;
  }

  // Senders' outflow at price p, including load above a node's limit.
  double outflow(double p, std::vector<double>* load) const {
    double f = 0.0;
    for (std::size_t k = 0; k < nodes_.size(); ++k) {
      const auto& nd = nodes_[k];
      double x = nd.reference;
      if (nd.can_send && pre_marginal(k) > p) x = inverse(k, p);
      x = std::min(x, nd.upper);
      if (x >= nd.reference) continue;
      if (load) (*load)[k] = x;
      f += nd.reference - x;
    }
    return f;
  }

  // Root of f(y) = target on [lo, hi] for monotone f; increasing selects
  // the direction.
  template <class F>
  double bisect(F f, double lo, double hi, double target, bool increasing, double tolerance,
                int max_iterations, int& it) const {
    for (int k = 0; k < max_iterations; ++k, ++it) {
      const double mid = 0.5 * (lo + hi);
      const double g = f(mid) - target;
      if (std::abs(g) < tolerance && hi - lo <= kAlphaRelTol * std::abs(mid)) return mid;
      if ((g > 0.0) == increasing) hi = mid;
      else lo = mid;
      if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(lo), std::abs(hi)))
        break;
    }
    return 0.5 * (lo + hi);
  }

  // The balanced solution would push more than the limit through the LAN:
  // fix lambda at the limit and price receivers and senders separately.
  // alpha_free is the receivers' price of the balanced solution.
  FlowSolution solve_at_limit(double alpha_free, double tolerance, int max_iterations) const {
    const std::size_t n = nodes_.size();
    const double cap = lan_.limit;
    FlowSolution out;
    double recv_min = kInf, send_hi = -kInf;
    for (std::size_t k = 0; k < n; ++k) {
      const auto& nd = nodes_[k];
      if (nd.can_receive) recv_min = std::min(recv_min, pre_marginal(k));
      if (nd.reference > nd.upper) send_hi = std::max(send_hi, marginal(k, nd.upper));
      else if (nd.can_send) send_hi = std::max(send_hi, pre_marginal(k));
    }
    int it = 0;
    const double y = bisect([&](double a) { return inflow(a, nullptr); }, recv_min, alpha_free, cap,
                            true, tolerance, max_iterations, it);
    const double p_lo = alpha_free + lan_marginal(cap);
    double p = send_hi;
    if (outflow(p_lo, nullptr) > cap)
      p = bisect([&](double q) { return outflow(q, nullptr); }, p_lo, send_hi, cap, false,
                 tolerance, max_iterations, it);
    out.load.resize(n);
    for (std::size_t k = 0; k < n; ++k) out.load[k] = nodes_[k].reference;
    const double in = inflow(y, &out.load);
    const double sent = outflow(p, &out.load);
    if (std::abs(in - sent) > std::max(tolerance, 1e-9 * cap))
      throw SolverError("flow balance at the LAN limit did not converge: inflow " +
                        std::to_string(in) + ", outflow " + std::to_string(sent));
    out.alpha = y;
    out.flow_gap = std::abs(in - sent);
    out.iterations = it;
    finish(out);
    out.lan_shadow = std::max(0.0, p - y - lan_marginal(out.lambda));
    return out;
  }

  // Closes the residual |lambda_S - lambda_R| left by the bisection so that
  // inflow equals outflow to rounding.
  void rebalance(std::vector<double>& load) const {
    const std::size_t n = nodes_.size();
    double in = 0.0, out = 0.0, free_out = 0.0, headroom = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const auto& nd = nodes_[k];
      if (load[k] > nd.reference) {
        in += load[k] - nd.reference;
        headroom += nd.upper - load[k];
      } else if (load[k] < nd.reference) {
        out += nd.reference - load[k];
        free_out += std::min(nd.reference, nd.upper) - load[k];
      }
    }
    if (in > out) {
      const double s = out / in;
      for (std::size_t k = 0; k < n; ++k)
        if (load[k] > nodes_[k].reference)
          load[k] = nodes_[k].reference + (load[k] - nodes_[k].reference) * s;
    } else if (out > in) {
      double excess = out - in;
      if (free_out > 0.0) {
        const double take = std::min(excess, free_out);
        for (std::size_t k = 0; k < n; ++k) {
          const auto& nd = nodes_[k];
          if (load[k] < nd.reference) {
            const double f = std::min(nd.reference, nd.upper) - load[k];
            load[k] += take * (f / free_out);
          }
        }
        excess -= take;
      }
      if (excess > 0.0 && headroom > 0.0) {
        const double give = std::min(excess, headroom);
        for (std::size_t k = 0; k < n; ++k) {
          const auto& nd = nodes_[k];
          if (load[k] > nd.reference) load[k] += give * ((nd.upper - load[k]) / headroom);
        }
      }
    }
  }

  std::vector<FlowNode> nodes_;
  CongestionModel lan_;
  double v_;
};

}  // namespace peeroff

#endif  // PEEROFF_FLOW_BALANCE_HPP
