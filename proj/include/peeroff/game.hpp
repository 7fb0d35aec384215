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

#ifndef PEEROFF_GAME_HPP
#define PEEROFF_GAME_HPP

// Peer offloading game: every SBS chooses its own routing row to minimize
//   C_i = sum_{j != i} beta_ij [V / (mu_j - w_j) + V tau / (1 - tau lambda)]
//         + beta_ii [V / (mu_i - w_i) + kappa q_i s].

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "peeroff/error.hpp"
#include "peeroff/flow_balance.hpp"
#include "peeroff/lyapunov.hpp"
#include "peeroff/model.hpp"

namespace peeroff {

struct GameOptions {
  double flow_tolerance = 1e-6;
  int max_iterations = 200;
  double convergence = 1e-6;  // relative to the initial total cost
  int max_rounds = 500;
};

struct BestResponse {
  std::vector<double> row;
  double alpha = 0.0;
  double lambda = 0.0;
  int iterations = 0;
  bool early_exit = false;
  double kkt_violation = 0.0;
};

struct GameState {
  OffloadProfile beta;
  int rounds = 0;
  double last_total_cost_change = 0.0;
  double tolerance = 0.0;  // epsilon_conv actually used
  std::vector<double> costs;
  double max_kkt_violation = 0.0;
  int best_responses = 0;
};

struct NeVerdict {
  bool is_ne = false;
  double max_improvement = 0.0;  // best unilateral cost decrease found
  std::size_t worst_sbs = 0;
  double worst_vi = 0.0;  // most negative <grad C_i, x - beta_i> / scale
};

struct PairMarginals {
  double d_ij = 0.0;
  double g_i = 0.0;
  double residual = 0.0;  // mu_ij
  double headroom = 0.0;  // Lambda_{-i}
};

struct PairMaccVector {
  std::vector<double> xi;  // +inf for an excluded peer
};

namespace detail {

// What SBS i sees when every other row is fixed.
struct PeerView {
  std::vector<double> residual;  // mu_ij = mu_j - sum_{k != i} beta_kj
  std::vector<double> limit;     // largest beta_ij keeping SBS j stable
  double headroom = 1.0;         // Lambda_{-i}
  double lan_limit = 0.0;        // largest lambda_i keeping the LAN stable
};

// Traffic SBS k must send no matter what: arrivals above its own limit.
inline double forced_outflow(std::size_t k, const OffloadProfile& beta, const NetworkConfig& cfg) {
  double phi = 0.0;
  for (std::size_t j = 0; j < cfg.n_sbs(); ++j) phi += beta(k, j);
  return std::max(0.0, phi - (1.0 - kStabilityMargin) * cfg.service_rates[k]);
}

inline PeerView peer_view(std::size_t i, const OffloadProfile& beta, const NetworkConfig& cfg) {
  const std::size_t n = cfg.n_sbs();
  PeerView v;
  v.residual.resize(n);
  v.limit.resize(n);
  double others = 0.0, reserved = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double load = 0.0;
    for (std::size_t k = 0; k < n; ++k)
      if (k != i) load += beta(k, j);
    v.residual[j] = cfg.service_rates[j] - load;
    v.limit[j] = v.residual[j] - kStabilityMargin * cfg.service_rates[j];
    if (j != i) {
      others += beta.outbound(j);
      reserved += std::max(beta.outbound(j), forced_outflow(j, beta, cfg));
    }
  }
  v.headroom = 1.0 - cfg.lan_delay * others;
  // LAN room still owed to SBSs that have not yet shed their overload is
  // not available to SBS i.
  v.lan_limit = std::max(0.0, (1.0 - cfg.lan_delay * reserved - kStabilityMargin) / cfg.lan_delay);
  return v;
}

inline double own_price(std::size_t i, const NetworkConfig& cfg, const SlotState& st) {
  return cfg.energy_per_task * st.deficits[i] * cfg.slot_scale();
}

// C_i without the feasibility check; +inf wherever a used queue is unstable.
inline double sbs_cost_unchecked(std::size_t i, const OffloadProfile& beta,
                                 const NetworkConfig& cfg, const SlotState& st) {
  const std::size_t n = cfg.n_sbs();
  const double v = cfg.control_v;
  const double lambda = beta.lan_traffic();
  const double inf = std::numeric_limits<double>::infinity();
  double c = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double b = beta(i, j);
    if (b <= 0.0) continue;
    const double gap = cfg.service_rates[j] - beta.post_workload(j);
    if (!(gap > 0.0)) return inf;
    double unit = v / gap;
    if (j == i) {
      unit += own_price(i, cfg, st);
    } else {
      const double lg = 1.0 - cfg.lan_delay * lambda;
      if (!(lg > 0.0)) return inf;
      unit += v * cfg.lan_delay / lg;
    }
    c += b * unit;
  }
  return c;
}

// Feasible rows for SBS i: x >= 0, sum x = phi_i, x_j <= limit_j,
// sum_{j != i} x_j <= lan_limit. Largest s in [0, 1] keeping
// from + s (to - from) inside.
inline double row_step_limit(std::size_t i, const std::vector<double>& from,
                             const std::vector<double>& to, const PeerView& v) {
  double s = 1.0;
  double off_from = 0.0, off_to = 0.0;
  for (std::size_t j = 0; j < from.size(); ++j) {
    const double d = to[j] - from[j];
    if (d > 0.0) s = std::min(s, std::max(0.0, (v.limit[j] - from[j]) / d));
    if (d < 0.0) s = std::min(s, std::max(0.0, -from[j] / d));
    if (j != i) {
      off_from += from[j];
      off_to += to[j];
    }
  }
  const double d = off_to - off_from;
  if (d > 0.0) s = std::min(s, std::max(0.0, (v.lan_limit - off_from) / d));
  return s;
}

}  // namespace detail

inline double sbs_cost(std::size_t i, const OffloadProfile& beta, const NetworkConfig& cfg,
                       const SlotState& st) {
  require_feasible(beta, cfg, st);
  return detail::sbs_cost_unchecked(i, beta, cfg, st);
}

// C_i plus the terms of SBS i's share of the per-slot objective that its own
// row cannot change; these shares sum to the per-slot objective.
inline double sbs_full_cost(std::size_t i, const OffloadProfile& beta, const NetworkConfig& cfg,
                            const SlotState& st) {
  const double c = sbs_cost(i, beta, cfg, st);
  double inbound = 0.0;
  for (std::size_t k = 0; k < cfg.n_sbs(); ++k)
    if (k != i) inbound += beta(k, i);
  return c + cfg.control_v * st.uplink_delay[i] + st.deficits[i] * st.tx_energy[i] +
         detail::own_price(i, cfg, st) * inbound;
}

// d_ij and g_i evaluated at (beta_ij, lambda_i) with the other rows fixed.
inline PairMarginals pair_marginals(std::size_t i, std::size_t j, const OffloadProfile& beta,
                                    const NetworkConfig& cfg, double beta_ij, double lambda_i) {
  const auto v = detail::peer_view(i, beta, cfg);
  PairMarginals m;
  m.residual = v.residual[j];
  m.headroom = v.headroom;
  if (!(m.residual > 0.0)) throw DomainError("residual capacity of SBS " + std::to_string(j) + " is exhausted");
  if (!(m.headroom > 0.0)) throw DomainError("LAN is saturated by the other SBSs");
  if (!(beta_ij >= 0.0 && beta_ij < m.residual)) throw DomainError("beta_ij outside [0, mu_ij)");
  if (!(lambda_i >= 0.0 && cfg.lan_delay * lambda_i < m.headroom))
    throw DomainError("lambda_i outside [0, Lambda_{-i} / tau)");
  const double gd = m.residual - beta_ij;
  m.d_ij = m.residual / (gd * gd);
  const double gl = m.headroom - cfg.lan_delay * lambda_i;
  m.g_i = cfg.lan_delay * m.headroom / (gl * gl);
  return m;
}

inline PairMaccVector pair_macc(std::size_t i, const OffloadProfile& beta, const NetworkConfig& cfg,
                                const SlotState& st) {
  const auto v = detail::peer_view(i, beta, cfg);
  PairMaccVector m;
  m.xi.assign(cfg.n_sbs(), kInf);
  for (std::size_t j = 0; j < cfg.n_sbs(); ++j) {
    if (j == i) {
      const double r = v.residual[i], phi = st.arrivals[i];
      if (phi < r) m.xi[i] = cfg.control_v * r / ((r - phi) * (r - phi)) + detail::own_price(i, cfg, st);
    } else if (v.limit[j] > 0.0) {
      m.xi[j] = cfg.control_v / v.residual[j];
    }
  }
  return m;
}

// Cost-minimizing row of SBS i against the other rows of beta.
inline BestResponse best_response(std::size_t i, const OffloadProfile& beta,
                                  const NetworkConfig& cfg, const SlotState& st,
                                  const GameOptions& opt = {}) {
  const std::size_t n = cfg.n_sbs();
  const auto view = detail::peer_view(i, beta, cfg);
  std::vector<FlowNode> nodes(n);
  for (std::size_t j = 0; j < n; ++j) {
    auto& nd = nodes[j];
    nd.capacity = view.residual[j];
    nd.upper = view.limit[j];
    if (j == i) {
      nd.reference = st.arrivals[i];
      nd.energy_price = detail::own_price(i, cfg, st);
      nd.can_receive = false;
      nd.can_send = true;
    } else {
      nd.reference = 0.0;
      nd.can_receive = view.limit[j] > 0.0;
      nd.can_send = false;
    }
  }
  CongestionModel lan{cfg.lan_delay, view.headroom, view.lan_limit};
  const FlowBalance fb(std::move(nodes), lan, cfg.control_v);
  const auto sol = fb.solve(opt.flow_tolerance, opt.max_iterations);

  BestResponse br;
  br.row = sol.load;
  double off = 0.0;
  for (std::size_t j = 0; j < n; ++j)
    if (j != i) off += br.row[j];
  br.row[i] = std::max(0.0, st.arrivals[i] - off);
  br.alpha = sol.alpha;
  br.lambda = off;
  br.iterations = sol.iterations;
  br.early_exit = sol.early_exit;
  br.kkt_violation = fb.kkt_violation(sol);
  return br;
}

// Best responses in ascending SBS order, starting from local processing,
// until a full round lowers the players' own costs by less than
// convergence * (initial total cost).
inline GameState round_robin_ne(const NetworkConfig& cfg, const SlotState& st,
                                const GameOptions& opt = {}) {
  cfg.validate();
  st.validate(cfg.n_sbs());
  const std::size_t n = cfg.n_sbs();
  GameState g;
  g.beta = OffloadProfile::no_offload(st.arrivals);
  auto total_cost = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += detail::sbs_cost_unchecked(i, g.beta, cfg, st);
    return s;
  };
  // Overloaded SBSs make the starting point infeasible; the scale is then
  // taken after the first round.
  double scale = check_profile(g.beta, cfg, st).ok ? total_cost() : -1.0;
  double prev_change = std::numeric_limits<double>::quiet_NaN();
  for (int round = 1; round <= opt.max_rounds; ++round) {
    double change = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double before = detail::sbs_cost_unchecked(i, g.beta, cfg, st);
      const auto br = best_response(i, g.beta, cfg, st, opt);
      for (std::size_t j = 0; j < n; ++j) g.beta(i, j) = br.row[j];
      const double after = detail::sbs_cost_unchecked(i, g.beta, cfg, st);
      if (std::isfinite(before) && after > before + 1e-9 * std::abs(before) + 1e-12)
        throw SolverError("best response of SBS " + std::to_string(i) + " raised its cost from " +
                          std::to_string(before) + " to " + std::to_string(after));
      change += before - after;
      g.max_kkt_violation = std::max(g.max_kkt_violation, br.kkt_violation);
      ++g.best_responses;
    }
    if (scale < 0.0) scale = total_cost();
    g.tolerance = opt.convergence * scale;
    g.rounds = round;
    g.last_total_cost_change = change;
    if (change <= g.tolerance) {
      g.costs.resize(n);
      for (std::size_t i = 0; i < n; ++i) g.costs[i] = detail::sbs_cost_unchecked(i, g.beta, cfg, st);
      require_feasible(g.beta, cfg, st);
      return g;
    }
    if (round == opt.max_rounds)
      throw SolverError("round robin did not converge in " + std::to_string(opt.max_rounds) +
                        " rounds; cost changes of the last two rounds: " +
                        std::to_string(prev_change) + ", " + std::to_string(change) +
                        " (tolerance " + std::to_string(g.tolerance) + ")");
    prev_change = change;
  }
  throw SolverError("round robin needs at least one round");
}

namespace detail {

// Gradient of C_i with respect to row i; +inf toward exhausted peers.
inline std::vector<double> cost_gradient(std::size_t i, const OffloadProfile& beta,
                                         const NetworkConfig& cfg, const SlotState& st) {
  const std::size_t n = cfg.n_sbs();
  const auto v = peer_view(i, beta, cfg);
  const double lgap = v.headroom - cfg.lan_delay * beta.outbound(i);
  const double g = cfg.lan_delay * v.headroom / (lgap * lgap);
  std::vector<double> grad(n, kInf);
  for (std::size_t j = 0; j < n; ++j) {
    const double gap = v.residual[j] - beta(i, j);
    if (!(gap > 0.0)) continue;
    const double d = v.residual[j] / (gap * gap);
    grad[j] = cfg.control_v * d + (j == i ? own_price(i, cfg, st) : cfg.control_v * g);
  }
  return grad;
}

// Cheapest feasible row under a linear cost: fill coordinates in order of
// increasing cost; the two nested caps (per peer, LAN total) keep greedy exact.
inline std::vector<double> linear_row_minimizer(std::size_t i, double phi,
                                                const std::vector<double>& cost,
                                                const PeerView& v) {
  const std::size_t n = cost.size();
  std::vector<std::size_t> order(n);
  for (std::size_t j = 0; j < n; ++j) order[j] = j;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return cost[a] < cost[b]; });
  std::vector<double> x(n, 0.0);
  double rest = phi, lan = std::max(0.0, v.lan_limit);
  for (std::size_t j : order) {
    double take = std::min(rest, std::max(0.0, v.limit[j]));
    if (j != i) {
      take = std::min(take, lan);
      lan -= take;
    }
    x[j] = take;
    rest -= take;
  }
  x[i] += std::max(0.0, rest);
  return x;
}

}  // namespace detail

// Measures how much any SBS could still gain by deviating alone: one best
// response per SBS, the linear (variational) minimizer, the vertices
// phi_i e_j and random rows, each pulled back into the feasible set.
inline NeVerdict verify_ne(const OffloadProfile& beta, const NetworkConfig& cfg,
                           const SlotState& st, double tol, int random_probes = 64,
                           std::uint64_t seed = 1, const GameOptions& opt = {}) {
  require_feasible(beta, cfg, st);
  const std::size_t n = cfg.n_sbs();
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> expo(1.0);
  NeVerdict out;
  for (std::size_t i = 0; i < n; ++i) {
    const double base = detail::sbs_cost_unchecked(i, beta, cfg, st);
    const auto view = detail::peer_view(i, beta, cfg);
    std::vector<double> cur(n);
    for (std::size_t j = 0; j < n; ++j) cur[j] = beta(i, j);
    OffloadProfile trial = beta;
    auto try_row = [&](const std::vector<double>& target) {
      const double s = detail::row_step_limit(i, cur, target, view);
      double off = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        trial(i, j) = cur[j] + s * (target[j] - cur[j]);
        if (j != i) off += trial(i, j);
      }
      trial(i, i) = std::max(0.0, st.arrivals[i] - off);
      const double gain = base - detail::sbs_cost_unchecked(i, trial, cfg, st);
      if (gain > out.max_improvement) {
        out.max_improvement = gain;
        out.worst_sbs = i;
      }
    };

    try_row(best_response(i, beta, cfg, st, opt).row);

    const auto grad = detail::cost_gradient(i, beta, cfg, st);
    const auto lin = detail::linear_row_minimizer(i, st.arrivals[i], grad, view);
    double vi = 0.0, scale = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (cur[j] > 0.0) scale += grad[j] * cur[j];
      if (lin[j] != cur[j]) vi += grad[j] * (lin[j] - cur[j]);
    }
    out.worst_vi = std::min(out.worst_vi, vi / std::max(scale, 1e-300));
    try_row(lin);

    for (std::size_t j = 0; j < n; ++j) {
      std::vector<double> vert(n, 0.0);
      vert[j] = st.arrivals[i];
      try_row(vert);
    }
    for (int p = 0; p < random_probes; ++p) {
      std::vector<double> w(n);
      double sw = 0.0;
      for (auto& x : w) sw += (x = expo(rng));
      for (auto& x : w) x *= st.arrivals[i] / sw;
      try_row(w);
    }
  }
  out.is_ne = out.max_improvement <= tol;
  return out;
}

// Ratio of full per-slot objectives; both include the decision-independent
// terms.
inline double measure_poa(const OffloadProfile& beta_ne, const OffloadProfile& beta_star,
                          const NetworkConfig& cfg, const SlotState& st) {
  const double num = per_slot_objective(beta_ne, cfg, st).value;
  const double den = per_slot_objective(beta_star, cfg, st).value;
  if (den == 0.0) {
    if (num == 0.0) return 1.0;
    throw SolverError("centralized objective is zero while the equilibrium objective is not");
  }
  if (num < den - kRelTol * std::abs(den))
    throw SolverError("equilibrium objective " + std::to_string(num) +
                      " is below the centralized optimum " + std::to_string(den));
  return num / den;
}

// Random feasible profile: a random re-routing of the arrivals pulled back
// toward a feasible anchor until it is feasible.
inline OffloadProfile random_feasible_profile(const OffloadProfile& anchor, const NetworkConfig& cfg,
                                              const SlotState& st, std::mt19937_64& rng) {
  const std::size_t n = cfg.n_sbs();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);
  OffloadProfile cand(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double off = st.arrivals[i] * u(rng) * u(rng);
    std::vector<double> w(n, 0.0);
    double sw = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) sw += (w[j] = expo(rng));
    cand(i, i) = st.arrivals[i] - (n > 1 ? off : 0.0);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) cand(i, j) = off * w[j] / sw;
  }
  // Largest step toward the candidate; all constraints are linear.
  double s = 1.0;
  const auto wa = anchor.post_workloads(), wc = cand.post_workloads();
  for (std::size_t j = 0; j < n; ++j) {
    const double lim = (1.0 - kStabilityMargin) * cfg.service_rates[j];
    const double d = wc[j] - wa[j];
    if (d > 0.0) s = std::min(s, std::max(0.0, (lim - wa[j]) / d));
  }
  const double la = anchor.lan_traffic(), lc = cand.lan_traffic();
  const double llim = (1.0 - kStabilityMargin) / cfg.lan_delay;
  if (lc > la) s = std::min(s, std::max(0.0, (llim - la) / (lc - la)));
  s *= u(rng) < 0.5 ? 1.0 : u(rng);
  OffloadProfile out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double off = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      out(i, j) = anchor(i, j) + s * (cand(i, j) - anchor(i, j));
      off += out(i, j);
    }
    out(i, i) = std::max(0.0, st.arrivals[i] - off);
  }
  return out;
}

// Sampled lower estimate of rho(c) = sup_j rho(c_.j), with
// c~_ij = c_ij + beta_ij dc_ij/dbeta_ij.
inline double estimate_rho(const OffloadProfile& anchor, const NetworkConfig& cfg,
                           const SlotState& st, int samples, std::uint64_t seed) {
  const std::size_t n = cfg.n_sbs();
  const double v = cfg.control_v, tau = cfg.lan_delay;
  std::mt19937_64 rng(seed);
  struct Costs {
    std::vector<double> c, ct;  // row-major c_ij, c~_ij
  };
  auto costs = [&](const OffloadProfile& b) {
    Costs k{std::vector<double>(n * n), std::vector<double>(n * n)};
    const auto w = b.post_workloads();
    const double lg = 1.0 - tau * b.lan_traffic();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double gap = cfg.service_rates[j] - w[j];
        double c = v / gap, slope = v / (gap * gap);
        if (i == j) {
          c += detail::own_price(i, cfg, st);
        } else {
          c += v * tau / lg;
          slope += v * tau * tau / (lg * lg);
        }
        k.c[i * n + j] = c;
        k.ct[i * n + j] = c + b(i, j) * slope;
      }
    return k;
  };
  double rho = 0.0;
  for (int s = 0; s < samples; ++s) {
    const auto b = random_feasible_profile(anchor, cfg, st, rng);
    const auto bh = random_feasible_profile(anchor, cfg, st, rng);
    const auto kb = costs(b), kh = costs(bh);
    for (std::size_t j = 0; j < n; ++j) {
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t ij = i * n + j;
        num += (kb.ct[ij] - kh.c[ij]) * bh(i, j) + (kb.c[ij] - kb.ct[ij]) * b(i, j);
        den += b(i, j) * kb.c[ij];
      }
      if (den > 0.0) rho = std::max(rho, num / den);
    }
  }
  return rho;
}

}  // namespace peeroff

#endif  // PEEROFF_GAME_HPP
