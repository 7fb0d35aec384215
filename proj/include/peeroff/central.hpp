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

#ifndef PEEROFF_CENTRAL_HPP
#define PEEROFF_CENTRAL_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "peeroff/error.hpp"
#include "peeroff/flow_balance.hpp"
#include "peeroff/model.hpp"

namespace peeroff {

struct MaccVector {
  std::vector<double> xi;  // +inf for an SBS at or beyond its service rate
};

struct FlowBalanceState {
  double alpha = 0.0;
  std::vector<std::size_t> sinks, sources, neutrals;
  std::vector<double> post_workloads;
  double lambda_sink = 0.0;    // lambda_S
  double lambda_source = 0.0;  // lambda_R
};

struct CentralOptions {
  double flow_tolerance = 1e-6;
  int max_iterations = 200;
  double stability_margin = kStabilityMargin;
  // Optional per-SBS ceilings on the post-offloading workload.
  std::vector<double> workload_caps;
};

struct CentralResult {
  Allocation allocation;
  double alpha = 0.0;
  double flow_gap = 0.0;
  int iterations = 0;
  bool early_exit = false;
  double kkt_violation = 0.0;
};

inline double energy_price(const NetworkConfig& cfg, const SlotState& st, std::size_t i) {
  return cfg.energy_per_task * st.deficits[i] * cfg.slot_scale();
}

inline MaccVector pre_offloading_macc(const NetworkConfig& cfg, const SlotState& st) {
  cfg.validate();
  st.validate(cfg.n_sbs());
  MaccVector m;
  m.xi.resize(cfg.n_sbs());
  for (std::size_t i = 0; i < cfg.n_sbs(); ++i) {
    const double mu = cfg.service_rates[i];
    const double phi = st.arrivals[i];
    m.xi[i] = phi < mu ? cfg.control_v * marginal_comp_delay(phi, mu) + energy_price(cfg, st, i)
                       : kInf;
  }
  return m;
}

namespace detail {

inline std::vector<double> workload_limits(const NetworkConfig& cfg, const CentralOptions& opt) {
  const std::size_t n = cfg.n_sbs();
  std::vector<double> hi(n);
  for (std::size_t i = 0; i < n; ++i) {
    hi[i] = (1.0 - opt.stability_margin) * cfg.service_rates[i];
    if (!opt.workload_caps.empty()) hi[i] = std::min(hi[i], std::max(0.0, opt.workload_caps[i]));
  }
  return hi;
}

inline FlowBalance central_problem(const NetworkConfig& cfg, const SlotState& st,
                                   const CentralOptions& opt) {
  const std::size_t n = cfg.n_sbs();
  if (!opt.workload_caps.empty() && opt.workload_caps.size() != n)
    throw ParameterError("workload cap vector has the wrong length");
  const auto hi = workload_limits(cfg, opt);
  std::vector<FlowNode> nodes(n);
  for (std::size_t i = 0; i < n; ++i) {
    nodes[i].reference = st.arrivals[i];
    nodes[i].capacity = cfg.service_rates[i];
    nodes[i].upper = hi[i];
    nodes[i].energy_price = energy_price(cfg, st, i);
  }
  CongestionModel lan;
  lan.tau = cfg.lan_delay;
  lan.headroom = 1.0;
  lan.limit = (1.0 - opt.stability_margin) / cfg.lan_delay;
  return FlowBalance(std::move(nodes), lan, cfg.control_v);
}

inline void split_categories(const std::vector<Category>& cats, FlowBalanceState& s) {
  for (std::size_t i = 0; i < cats.size(); ++i) {
    switch (cats[i]) {
      case Category::Sink: s.sinks.push_back(i); break;
      case Category::Source: s.sources.push_back(i); break;
      case Category::Neutral: s.neutrals.push_back(i); break;
    }
  }
}

}  // namespace detail

// Classification for one multiplier value. lambda_guess prices the LAN for
// the source test; by default the sinks' inflow is used.
inline FlowBalanceState categorize(double alpha, std::optional<double> lambda_guess,
                                   const MaccVector& xi, const NetworkConfig& cfg,
                                   const SlotState& st) {
  if (!(alpha > 0.0)) throw ParameterError("multiplier must be positive");
  if (lambda_guess && !(*lambda_guess >= 0.0 && *lambda_guess * cfg.lan_delay < 1.0))
    throw ParameterError("lambda guess outside [0, 1/tau)");
  const auto problem = detail::central_problem(cfg, st, CentralOptions{});
  for (std::size_t i = 0; i < xi.xi.size(); ++i)
    if (!approx_equal(xi.xi[i], problem.pre_marginal(i)) && xi.xi[i] != problem.pre_marginal(i))
      throw ParameterError("MaCC vector does not match the slot state");
  const auto e = problem.evaluate(alpha, lambda_guess);
  FlowBalanceState s;
  s.alpha = alpha;
  s.post_workloads = e.load;
  s.lambda_sink = e.lambda_in;
  s.lambda_source = e.lambda_out;
  detail::split_categories(e.categories, s);
  return s;
}

// Total workload must fit under the per-SBS limits and the forced outflow
// must fit through the LAN.
inline FeasibilityReport check_instance(const NetworkConfig& cfg, const SlotState& st,
                                        const CentralOptions& opt = {}) {
  const auto hi = detail::workload_limits(cfg, opt);
  double total = 0.0, room = 0.0, forced = 0.0;
  for (std::size_t i = 0; i < cfg.n_sbs(); ++i) {
    total += st.arrivals[i];
    room += hi[i];
    forced += std::max(0.0, st.arrivals[i] - hi[i]);
  }
  FeasibilityReport r;
  if (total > room) {
    r.ok = false;
    r.condition = "stability";
    r.detail = "total arrivals " + std::to_string(total) + " exceed admissible capacity " +
               std::to_string(room);
  } else if (forced >= (1.0 - opt.stability_margin) / cfg.lan_delay) {
    r.ok = false;
    r.condition = "lan-stability";
    r.detail = "forced LAN traffic " + std::to_string(forced) + " exceeds the LAN limit";
  }
  return r;
}

inline CentralResult solve_central(const NetworkConfig& cfg, const SlotState& st,
                                   const CentralOptions& opt = {}) {
  cfg.validate();
  st.validate(cfg.n_sbs());
  const auto rep = check_instance(cfg, st, opt);
  if (!rep.ok) throw FeasibilityError(rep.condition, rep.detail);
  const auto problem = detail::central_problem(cfg, st, opt);
  const auto sol = problem.solve(opt.flow_tolerance, opt.max_iterations);
  CentralResult r;
  r.allocation.post_workloads = sol.load;
  r.allocation.lan_traffic = sol.lambda;
  r.allocation.categories = sol.categories;
  r.alpha = sol.alpha;
  r.flow_gap = sol.flow_gap;
  r.iterations = sol.iterations;
  r.early_exit = sol.early_exit;
  r.kkt_violation = problem.kkt_violation(sol);
  return r;
}

inline Allocation solve_per_slot_centralized(const NetworkConfig& cfg, const SlotState& st,
                                             double flow_tolerance = 1e-6) {
  CentralOptions opt;
  opt.flow_tolerance = flow_tolerance;
  return solve_central(cfg, st, opt).allocation;
}

// Decision-dependent part of the per-slot objective evaluated on an
// allocation: sum_i [V w_i/(mu_i - w_i) + kappa q_i s w_i] + V tau l/(1 - tau l).
inline double allocation_objective(const Allocation& a, const NetworkConfig& cfg,
                                   const SlotState& st) {
  double f = 0.0;
  for (std::size_t i = 0; i < cfg.n_sbs(); ++i) {
    const double w = a.post_workloads[i];
    f += cfg.control_v * w * computation_delay(w, cfg.service_rates[i]) +
         energy_price(cfg, st, i) * w;
  }
  f += cfg.control_v * a.lan_traffic * congestion_delay(a.lan_traffic, cfg.lan_delay);
  return f;
}

// Greedy matching of surpluses to deficits, largest first, ties by index.
inline OffloadProfile realize_profile(const Allocation& alloc, const SlotState& st) {
  const std::size_t n = st.size();
  if (alloc.post_workloads.size() != n)
    throw ParameterError("allocation and slot state sizes differ");
  OffloadProfile beta(n);
  std::vector<std::pair<double, std::size_t>> src, snk;
  double surplus = 0.0, deficit = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double phi = st.arrivals[i];
    const double w = alloc.post_workloads[i];
    beta(i, i) = std::min(phi, w);
    if (phi > w) {
      src.emplace_back(phi - w, i);
      surplus += phi - w;
    } else if (w > phi) {
      snk.emplace_back(w - phi, i);
      deficit += w - phi;
    }
  }
  if (!approx_equal(surplus, deficit))
    throw SolverError("allocation does not balance: outbound " + std::to_string(surplus) +
                      " vs inbound " + std::to_string(deficit));
  auto by_size = [](const auto& a, const auto& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  };
  std::sort(src.begin(), src.end(), by_size);
  std::sort(snk.begin(), snk.end(), by_size);
  std::size_t a = 0, b = 0;
  while (a < src.size() && b < snk.size()) {
    const bool last_snk = b + 1 == snk.size();
    // The last sink takes whatever each source still holds so rows sum to phi.
    const double amount = last_snk ? src[a].first : std::min(src[a].first, snk[b].first);
    beta(src[a].second, snk[b].second) += amount;
    src[a].first -= amount;
    snk[b].first -= amount;
    if (src[a].first <= 0.0) ++a;
    if (!last_snk && snk[b].first <= 0.0) ++b;
  }
  for (; a < src.size(); ++a) beta(src[a].second, src[a].second) += src[a].first;
  return beta;
}

}  // namespace peeroff

#endif  // PEEROFF_CENTRAL_HPP
