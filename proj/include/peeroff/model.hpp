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

#ifndef PEEROFF_MODEL_HPP
#define PEEROFF_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "peeroff/error.hpp"

namespace peeroff {

// Solvers never load an SBS above (1 - margin) * mu, nor the LAN above
// (1 - margin) / tau.
inline constexpr double kStabilityMargin = 1e-4;

inline constexpr double kRelTol = 1e-9;
inline constexpr double kAbsTol = 1e-12;

inline bool approx_equal(double a, double b, double rel = kRelTol,
                         double abs = kAbsTol) {
  return std::abs(a - b) <= std::max(abs, rel * std::max(std::abs(a), std::abs(b)));
}

inline bool approx_le(double a, double b, double rel = kRelTol,
                      double abs = kAbsTol) {
  return a <= b || approx_equal(a, b, rel, abs);
}

// Static system parameters. Rates are tasks/sec, energies watt-hours per
// slot, the LAN delay sec/task.
struct NetworkConfig {
  std::vector<double> service_rates;   // mu_i = f_i / h
  double lan_delay = 0.2;              // tau
  double energy_per_task = 9e-5;       // kappa, Wh per task
  std::vector<double> energy_budgets;  // long-term budget per slot
  double energy_cap = 0.0;             // per-slot cap, checked post hoc
  double delay_cap = 0.0;              // per-slot per-SBS delay cap, post hoc
  double control_v = 50.0;             // V
  double slot_duration = 60.0;         // sec

  std::size_t n_sbs() const { return service_rates.size(); }

  // Multiplies kappa * omega (tasks/sec) into watt-hours per slot.
  double slot_scale() const { return slot_duration; }

  double lan_capacity() const { return 1.0 / lan_delay; }

  void validate() const {
    const std::size_t n = n_sbs();
    if (n == 0) throw ParameterError("network has no SBS");
    if (energy_budgets.size() != n)
      throw ParameterError("energy_budgets size does not match service_rates");
    for (std::size_t i = 0; i < n; ++i) {
      if (!(service_rates[i] > 0.0) || !std::isfinite(service_rates[i]))
        throw ParameterError("service rate of SBS " + std::to_string(i) +
                             " must be positive");
      if (!(energy_budgets[i] >= 0.0))
        throw ParameterError("energy budget of SBS " + std::to_string(i) +
                             " must be non-negative");
      if (energy_budgets[i] > energy_cap)
        throw ParameterError("energy budget of SBS " + std::to_string(i) +
                             " exceeds the per-slot energy cap");
    }
    if (!(lan_delay > 0.0)) throw ParameterError("lan_delay must be positive");
    if (!(energy_per_task > 0.0))
      throw ParameterError("energy_per_task must be positive");
    if (!(control_v >= 0.0)) throw ParameterError("control_v must be >= 0");
    if (!(slot_duration > 0.0))
      throw ParameterError("slot_duration must be positive");
    if (!(delay_cap > 0.0)) throw ParameterError("delay_cap must be positive");
  }

  // n identical SBSs; caps default to 10x budget and a loose delay cap.
  static NetworkConfig uniform(std::size_t n, double mu, double tau,
                               double kappa, double budget, double v,
                               double slot = 60.0) {
    NetworkConfig cfg;
    cfg.service_rates.assign(n, mu);
    cfg.lan_delay = tau;
    cfg.energy_per_task = kappa;
    cfg.energy_budgets.assign(n, budget);
    cfg.energy_cap = 10.0 * budget;
    cfg.delay_cap = 1e6;
    cfg.control_v = v;
    cfg.slot_duration = slot;
    return cfg;
  }
};

// Per-slot randomness observed at the start of slot t.
struct SlotState {
  std::vector<double> arrivals;      // phi_i, tasks/sec
  std::vector<double> uplink_delay;  // D^u_i
  std::vector<double> tx_energy;     // E^tx_i, Wh
  std::vector<double> deficits;      // q_i, Wh
  std::size_t slot_index = 0;

  std::size_t size() const { return arrivals.size(); }

  static SlotState idle(std::size_t n) {
    SlotState st;
    st.arrivals.assign(n, 0.0);
    st.uplink_delay.assign(n, 0.0);
    st.tx_energy.assign(n, 0.0);
    st.deficits.assign(n, 0.0);
    return st;
  }

  void validate(std::size_t n) const {
    if (arrivals.size() != n || uplink_delay.size() != n ||
        tx_energy.size() != n || deficits.size() != n)
      throw ParameterError("slot state vectors do not match the SBS count");
    for (std::size_t i = 0; i < n; ++i) {
      if (!(arrivals[i] >= 0.0) || !(uplink_delay[i] >= 0.0) ||
          !(tx_energy[i] >= 0.0) || !(deficits[i] >= 0.0))
        throw ParameterError("slot state entry of SBS " + std::to_string(i) +
                             " is negative or NaN");
    }
  }
};

enum class Category { Source, Neutral, Sink };

inline const char* to_string(Category c) {
  switch (c) {
    case Category::Source: return "source";
    case Category::Neutral: return "neutral";
    case Category::Sink: return "sink";
  }
  return "?";
}

// beta(i, j): tasks/sec that SBS i routes to SBS j; row i sums to phi_i.
class OffloadProfile {
 public:
  OffloadProfile() = default;
  explicit OffloadProfile(std::size_t n) : n_(n), beta_(n * n, 0.0) {}

  static OffloadProfile no_offload(std::span<const double> arrivals) {
    OffloadProfile p(arrivals.size());
    for (std::size_t i = 0; i < arrivals.size(); ++i) p(i, i) = arrivals[i];
    return p;
  }

  std::size_t size() const { return n_; }

  double& operator()(std::size_t i, std::size_t j) { return beta_[i * n_ + j]; }
  double operator()(std::size_t i, std::size_t j) const {
    return beta_[i * n_ + j];
  }

  std::span<double> row(std::size_t i) { return {beta_.data() + i * n_, n_}; }
  std::span<const double> row(std::size_t i) const {
    return {beta_.data() + i * n_, n_};
  }

  double row_sum(std::size_t i) const {
    auto r = row(i);
    return std::accumulate(r.begin(), r.end(), 0.0);
  }

  // omega_j: everything routed to j, including j's own retained load.
  double post_workload(std::size_t j) const {
    double s = 0.0;
    for (std::size_t i = 0; i < n_; ++i) s += (*this)(i, j);
    return s;
  }

  std::vector<double> post_workloads() const {
    std::vector<double> w(n_, 0.0);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j) w[j] += (*this)(i, j);
    return w;
  }

  // lambda_i: traffic SBS i puts on the LAN.
  double outbound(std::size_t i) const {
    double s = 0.0;
    for (std::size_t j = 0; j < n_; ++j)
      if (j != i) s += (*this)(i, j);
    return s;
  }

  double lan_traffic() const {
    double s = 0.0;
    for (std::size_t i = 0; i < n_; ++i) s += outbound(i);
    return s;
  }

  const std::vector<double>& data() const { return beta_; }

  friend bool operator==(const OffloadProfile&, const OffloadProfile&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> beta_;
};

// Reduced decision: post-offloading workloads and LAN traffic.
struct Allocation {
  std::vector<double> post_workloads;
  double lan_traffic = 0.0;
  std::vector<Category> categories;
};

// --- closed-form costs ------------------------------------------------------

// Shannon rate W log2(1 + P H / sigma^2), bits/sec.
inline double downlink_rate(double tx_power, double channel_gain,
                            double noise_power, double bandwidth) {
  if (!(tx_power > 0.0) || !(channel_gain > 0.0) || !(noise_power > 0.0) ||
      !(bandwidth > 0.0))
    throw ParameterError("downlink_rate inputs must be positive");
  return bandwidth * std::log2(1.0 + tx_power * channel_gain / noise_power);
}

inline double dbm_to_watts(double dbm) { return std::pow(10.0, dbm / 10.0) * 1e-3; }

// M/M/1 LAN delay per task.
inline double congestion_delay(double lambda, double tau) {
  if (!(lambda >= 0.0) || !(tau * lambda < 1.0))
    throw DomainError("LAN traffic outside [0, 1/tau)");
  return tau / (1.0 - tau * lambda);
}

// M/M/1 computation delay per task.
inline double computation_delay(double omega, double mu) {
  if (!(omega >= 0.0) || !(omega < mu))
    throw DomainError("workload outside [0, mu)");
  return 1.0 / (mu - omega);
}

// d(omega) = d/d omega [omega / (mu - omega)].
inline double marginal_comp_delay(double omega, double mu) {
  if (!(omega >= 0.0) || !(omega < mu))
    throw DomainError("workload outside [0, mu)");
  const double gap = mu - omega;
  return mu / (gap * gap);
}

inline double inverse_marginal_comp_delay(double y, double mu) {
  if (!(mu > 0.0)) throw ParameterError("service rate must be positive");
  // The idle marginal is exactly 1/mu; accept rounding right at the boundary.
  if (!(y * mu >= 1.0 - 1e-15))
    throw DomainError("marginal value below the idle marginal 1/mu");
  return std::max(0.0, mu - std::sqrt(mu / y));
}

// g(lambda) = d/d lambda [lambda * tau / (1 - tau lambda)].
inline double marginal_congestion_delay(double lambda, double tau) {
  if (!(lambda >= 0.0) || !(tau * lambda < 1.0))
    throw DomainError("LAN traffic outside [0, 1/tau)");
  const double gap = 1.0 - tau * lambda;
  return tau / (gap * gap);
}

// --- feasibility ------------------------------------------------------------

struct FeasibilityReport {
  bool ok = true;
  std::string condition;  // positivity | conservation | stability | lan-stability | shape
  std::string detail;
};

// Checks the four feasibility conditions. With margin > 0 the stability
// limits tighten to (1 - margin) mu_i and (1 - margin) / tau.
inline FeasibilityReport check_profile(const OffloadProfile& beta,
                                       const NetworkConfig& cfg,
                                       const SlotState& st,
                                       double margin = 0.0) {
  const std::size_t n = cfg.n_sbs();
  auto fail = [](std::string cond, std::string detail) {
    return FeasibilityReport{false, std::move(cond), std::move(detail)};
  };
  if (beta.size() != n || st.size() != n)
    return fail("shape", "profile or slot state size does not match the network");
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (!(beta(i, j) >= 0.0)) {
        std::ostringstream os;
        os << "beta(" << i << "," << j << ") = " << beta(i, j) << " < 0";
        return fail("positivity", os.str());
      }
  for (std::size_t i = 0; i < n; ++i) {
    const double s = beta.row_sum(i);
    if (!approx_equal(s, st.arrivals[i])) {
      std::ostringstream os;
      os << "row " << i << " sums to " << s << " but phi = " << st.arrivals[i];
      return fail("conservation", os.str());
    }
  }
  const auto omega = beta.post_workloads();
  for (std::size_t i = 0; i < n; ++i) {
    const double mu = cfg.service_rates[i];
    const double limit = (1.0 - margin) * mu;
    if (!(omega[i] < mu) || !approx_le(omega[i], limit)) {
      std::ostringstream os;
      os << "omega_" << i << " = " << omega[i] << " exceeds " << limit;
      return fail("stability", os.str());
    }
  }
  const double lambda = beta.lan_traffic();
  const double cap = cfg.lan_capacity();
  if (!(lambda < cap) || !approx_le(lambda, (1.0 - margin) * cap)) {
    std::ostringstream os;
    os << "LAN traffic " << lambda << " exceeds " << (1.0 - margin) * cap;
    return fail("lan-stability", os.str());
  }
  return {};
}

inline void require_feasible(const OffloadProfile& beta, const NetworkConfig& cfg,
                             const SlotState& st) {
  auto rep = check_profile(beta, cfg, st);
  if (!rep.ok) throw FeasibilityError(rep.condition, "infeasible profile: " + rep.detail);
}

// Per-SBS delay cost split the way the delay-composition plots need it.
struct DelayBreakdown {
  double computation = 0.0;
  double congestion = 0.0;
  double communication = 0.0;

  double total() const { return computation + congestion + communication; }
};

namespace detail {

inline DelayBreakdown delay_breakdown_unchecked(std::size_t i,
                                                const OffloadProfile& beta,
                                                const std::vector<double>& omega,
                                                double lambda,
                                                const NetworkConfig& cfg,
                                                const SlotState& st) {
  DelayBreakdown d;
  const std::size_t n = cfg.n_sbs();
  for (std::size_t j = 0; j < n; ++j) {
    const double b = beta(i, j);
    if (b > 0.0) d.computation += b * computation_delay(omega[j], cfg.service_rates[j]);
  }
  const double out = beta.outbound(i);
  if (out > 0.0) d.congestion = out * congestion_delay(lambda, cfg.lan_delay);
  d.communication = st.uplink_delay[i];
  return d;
}

inline double energy_unchecked(std::size_t i, double omega_i,
                               const NetworkConfig& cfg, const SlotState& st) {
  return st.tx_energy[i] + cfg.energy_per_task * omega_i * cfg.slot_scale();
}

}  // namespace detail

inline DelayBreakdown sbs_delay_breakdown(std::size_t i, const OffloadProfile& beta,
                                          const NetworkConfig& cfg,
                                          const SlotState& st) {
  require_feasible(beta, cfg, st);
  return detail::delay_breakdown_unchecked(i, beta, beta.post_workloads(),
                                           beta.lan_traffic(), cfg, st);
}

// Sum of delays of the tasks that arrived at SBS i.
inline double sbs_delay_cost(std::size_t i, const OffloadProfile& beta,
                             const NetworkConfig& cfg, const SlotState& st) {
  return sbs_delay_breakdown(i, beta, cfg, st).total();
}

// Transmission energy plus kappa * omega_i over the slot, in Wh.
inline double sbs_energy(std::size_t i, const OffloadProfile& beta,
                         const NetworkConfig& cfg, const SlotState& st) {
  require_feasible(beta, cfg, st);
  return detail::energy_unchecked(i, beta.post_workload(i), cfg, st);
}

}  // namespace peeroff

#endif  // PEEROFF_MODEL_HPP
