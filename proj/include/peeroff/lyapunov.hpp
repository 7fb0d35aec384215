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

#ifndef PEEROFF_LYAPUNOV_HPP
#define PEEROFF_LYAPUNOV_HPP

#include <algorithm>
#include <chrono>
#include <concepts>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "peeroff/error.hpp"
#include "peeroff/model.hpp"

namespace peeroff {

inline double update_deficit(double q, double energy_used, double budget) {
  return std::max(q + energy_used - budget, 0.0);
}

struct DeficitQueues {
  std::vector<double> q;
  std::vector<std::vector<double>> history;  // filled when keep_history is set
  bool keep_history = false;

  explicit DeficitQueues(std::size_t n, bool keep = false) : q(n, 0.0), keep_history(keep) {}

  void update(std::span<const double> energy, std::span<const double> budget) {
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = update_deficit(q[i], energy[i], budget[i]);
    if (keep_history) history.push_back(q);
  }

  double total() const {
    double s = 0.0;
    for (double x : q) s += x;
    return s;
  }
};

struct PerSlotObjective {
  double value = 0.0;
  double decision_dependent = 0.0;
  double decision_independent = 0.0;
  double direct = 0.0;  // sum_i (V D_i + q_i E_i) summed SBS by SBS
};

// Drift-plus-penalty objective of one slot, evaluated both SBS by SBS and in
// the regrouped form (per-station terms plus one LAN term).
inline PerSlotObjective per_slot_objective(const OffloadProfile& beta, const NetworkConfig& cfg,
                                           const SlotState& st) {
  require_feasible(beta, cfg, st);
  const std::size_t n = cfg.n_sbs();
  const double v = cfg.control_v;
  const auto omega = beta.post_workloads();
  const double lambda = beta.lan_traffic();
  PerSlotObjective o;
  for (std::size_t i = 0; i < n; ++i) {
    const auto d = detail::delay_breakdown_unchecked(i, beta, omega, lambda, cfg, st);
    o.direct += v * d.total() + st.deficits[i] * detail::energy_unchecked(i, omega[i], cfg, st);
    const double mu = cfg.service_rates[i];
    o.decision_dependent += v * omega[i] / (mu - omega[i]) +
                            cfg.energy_per_task * st.deficits[i] * omega[i] * cfg.slot_scale();
    o.decision_independent += v * st.uplink_delay[i] + st.deficits[i] * st.tx_energy[i];
  }
  const double tl = cfg.lan_delay * lambda;
  o.decision_dependent += v * tl / (1.0 - tl);
  o.value = o.decision_dependent + o.decision_independent;
  return o;
}

// --- admission --------------------------------------------------------------

struct Admission {
  SlotState admitted;
  std::vector<double> dropped;
  bool clamped = false;
};

inline std::vector<double> station_limits(const NetworkConfig& cfg,
                                          std::span<const double> caps = {}) {
  std::vector<double> hi(cfg.n_sbs());
  for (std::size_t i = 0; i < hi.size(); ++i) {
    hi[i] = (1.0 - kStabilityMargin) * cfg.service_rates[i];
    if (!caps.empty()) hi[i] = std::min(hi[i], std::max(0.0, caps[i]));
  }
  return hi;
}

// Every SBS keeps at most its own limit; the rest is dropped.
inline Admission clamp_each(const NetworkConfig& cfg, const SlotState& st,
                            std::span<const double> caps = {}) {
  Admission a{st, std::vector<double>(st.size(), 0.0), false};
  const auto hi = station_limits(cfg, caps);
  for (std::size_t i = 0; i < st.size(); ++i) {
    if (st.arrivals[i] > hi[i]) {
      a.dropped[i] = st.arrivals[i] - hi[i];
      a.admitted.arrivals[i] = hi[i];
      a.clamped = true;
    }
  }
  return a;
}

// Leaves the slot untouched when some allocation can carry it (total load
// fits and the forced LAN traffic fits); otherwise clamps every SBS.
inline Admission admit(const NetworkConfig& cfg, const SlotState& st,
                       std::span<const double> caps = {}) {
  const auto hi = station_limits(cfg, caps);
  double total = 0.0, room = 0.0, forced = 0.0;
  for (std::size_t i = 0; i < st.size(); ++i) {
    total += st.arrivals[i];
    room += hi[i];
    forced += std::max(0.0, st.arrivals[i] - hi[i]);
  }
  if (total <= room && forced < (1.0 - kStabilityMargin) / cfg.lan_delay)
    return Admission{st, std::vector<double>(st.size(), 0.0), false};
  return clamp_each(cfg, st, caps);
}

// --- outer loop -------------------------------------------------------------

struct Decision {
  OffloadProfile profile;
  SlotState admitted;
  std::vector<double> dropped;
  double poa = std::numeric_limits<double>::quiet_NaN();
  double reference_objective = std::numeric_limits<double>::quiet_NaN();  // centralized, same slot
  int iterations = 0;
};

using PolicyFn = std::function<Decision(const NetworkConfig&, const SlotState&)>;

struct Policy {
  std::string name;
  PolicyFn decide;
};

struct SbsMetrics {
  double omega = 0.0;
  double energy = 0.0;
  double deficit = 0.0;  // q_i(t + 1)
  DelayBreakdown delay;
  double dropped = 0.0;
};

struct SlotMetrics {
  std::size_t t = 0;
  std::vector<SbsMetrics> sbs;
  double total_delay = 0.0;
  double computation_delay = 0.0;
  double congestion_delay = 0.0;
  double communication_delay = 0.0;
  double total_energy = 0.0;
  double total_deficit = 0.0;  // sum_i q_i(t + 1)
  double lan_traffic = 0.0;
  double objective = 0.0;
  double poa = std::numeric_limits<double>::quiet_NaN();
  double reference_objective = std::numeric_limits<double>::quiet_NaN();
  double dropped = 0.0;
  int iterations = 0;
  int energy_cap_violations = 0;
  int delay_cap_violations = 0;
  bool solver_error = false;
  std::string error;
  double solve_micros = 0.0;  // wall clock, not part of the deterministic output
};

struct RunResult {
  std::vector<SlotMetrics> slots;
  std::vector<double> final_deficits;
};

// Slot-state source: returns std::nullopt when exhausted.
template <class S>
concept SlotStream = requires(S s) {
  { s.next() } -> std::same_as<std::optional<SlotState>>;
};

class VectorStream {
 public:
  explicit VectorStream(std::vector<SlotState> slots) : slots_(std::move(slots)) {}
  std::optional<SlotState> next() {
    if (pos_ >= slots_.size()) return std::nullopt;
    return slots_[pos_++];
  }

 private:
  std::vector<SlotState> slots_;
  std::size_t pos_ = 0;
};

namespace detail {

inline SlotMetrics measure_slot(const Decision& d, const NetworkConfig& cfg,
                                std::vector<double>& q) {
  const std::size_t n = cfg.n_sbs();
  const auto& beta = d.profile;
  const auto& st = d.admitted;
  const auto omega = beta.post_workloads();
  const double lambda = beta.lan_traffic();
  SlotMetrics m;
  m.t = st.slot_index;
  m.sbs.resize(n);
  m.lan_traffic = lambda;
  m.objective = per_slot_objective(beta, cfg, st).value;
  m.poa = d.poa;
  m.reference_objective = d.reference_objective;
  m.iterations = d.iterations;
  for (std::size_t i = 0; i < n; ++i) {
    auto& s = m.sbs[i];
    s.omega = omega[i];
    s.delay = delay_breakdown_unchecked(i, beta, omega, lambda, cfg, st);
    s.energy = energy_unchecked(i, omega[i], cfg, st);
    s.dropped = d.dropped.empty() ? 0.0 : d.dropped[i];
    q[i] = update_deficit(q[i], s.energy, cfg.energy_budgets[i]);
    s.deficit = q[i];
    m.computation_delay += s.delay.computation;
    m.congestion_delay += s.delay.congestion;
    m.communication_delay += s.delay.communication;
    m.total_energy += s.energy;
    m.total_deficit += q[i];
    m.dropped += s.dropped;
    if (s.energy > cfg.energy_cap) ++m.energy_cap_violations;
    if (s.delay.total() > cfg.delay_cap) ++m.delay_cap_violations;
  }
  m.total_delay = m.computation_delay + m.congestion_delay + m.communication_delay;
  return m;
}

}  // namespace detail

// Stays local and drops whatever exceeds each SBS's limit.
inline Decision fallback_decision(const NetworkConfig& cfg, const SlotState& st) {
  auto a = clamp_each(cfg, st);
  Decision d{OffloadProfile::no_offload(a.admitted.arrivals), std::move(a.admitted),
             std::move(a.dropped)};
  return d;
}

// Runs the policy for `horizon` slots starting from empty deficit queues.
// A failing solve is recorded and replaced by the local fallback.
template <SlotStream Stream>
RunResult run_open(const Policy& policy, Stream& stream, const NetworkConfig& cfg,
                   std::size_t horizon,
                   const std::function<void(const SlotMetrics&)>& on_slot = {}) {
  cfg.validate();
  if (horizon < 1) throw ParameterError("horizon must be at least one slot");
  const std::size_t n = cfg.n_sbs();
  std::vector<double> q(n, 0.0);
  RunResult out;
  out.slots.reserve(horizon);
  for (std::size_t t = 0; t < horizon; ++t) {
    auto next = stream.next();
    if (!next)
      throw HarnessError(HarnessError::Kind::Stream,
                         "scenario stream ended after " + std::to_string(t) + " of " +
                             std::to_string(horizon) + " slots");
    SlotState st = std::move(*next);
    st.slot_index = t;
    st.deficits = q;
    st.validate(n);

    Decision d;
    std::string error;
    const auto start = std::chrono::steady_clock::now();
    try {
      d = policy.decide(cfg, st);
      const auto rep = check_profile(d.profile, cfg, d.admitted);
      if (!rep.ok) throw FeasibilityError(rep.condition, "policy returned an infeasible profile: " + rep.detail);
    } catch (const SolverError& e) {
      error = e.what();
    } catch (const FeasibilityError& e) {
      error = e.what();
    } catch (const DomainError& e) {
      error = e.what();
    }
    const auto stop = std::chrono::steady_clock::now();
    if (!error.empty()) d = fallback_decision(cfg, st);
    d.admitted.slot_index = t;

    SlotMetrics m = detail::measure_slot(d, cfg, q);
    m.solver_error = !error.empty();
    m.error = std::move(error);
    m.solve_micros = std::chrono::duration<double, std::micro>(stop - start).count();
    if (on_slot) on_slot(m);
    out.slots.push_back(std::move(m));
  }
  out.final_deficits = q;
  return out;
}

}  // namespace peeroff

#endif  // PEEROFF_LYAPUNOV_HPP
