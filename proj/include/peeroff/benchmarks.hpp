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

#ifndef PEEROFF_BENCHMARKS_HPP
#define PEEROFF_BENCHMARKS_HPP

#include <algorithm>
#include <vector>

#include "peeroff/central.hpp"
#include "peeroff/lyapunov.hpp"
#include "peeroff/model.hpp"

namespace peeroff {

// Every SBS processes what it receives, up to its own limit.
inline Decision nop_decision(const NetworkConfig& cfg, const SlotState& st) {
  auto a = clamp_each(cfg, st);
  return Decision{OffloadProfile::no_offload(a.admitted.arrivals), std::move(a.admitted),
                  std::move(a.dropped)};
}

inline OffloadProfile nop_profile(const NetworkConfig& cfg, const SlotState& st) {
  return nop_decision(cfg, st).profile;
}

// Pure delay minimization: the centralized solve with every deficit at zero.
inline Decision delay_optimal_decision(const NetworkConfig& cfg, const SlotState& st) {
  auto a = admit(cfg, st);
  SlotState blind = a.admitted;
  std::fill(blind.deficits.begin(), blind.deficits.end(), 0.0);
  const auto r = solve_central(cfg, blind);
  Decision d{realize_profile(r.allocation, a.admitted), std::move(a.admitted), std::move(a.dropped)};
  d.iterations = r.iterations;
  return d;
}

inline OffloadProfile delay_optimal_profile(const NetworkConfig& cfg, const SlotState& st) {
  return delay_optimal_decision(cfg, st).profile;
}

// Largest workload SBS i can process without exceeding its per-slot budget.
inline std::vector<double> ssc_workload_caps(const NetworkConfig& cfg, const SlotState& st) {
  std::vector<double> caps(cfg.n_sbs());
  for (std::size_t i = 0; i < caps.size(); ++i)
    caps[i] = std::max(0.0, (cfg.energy_budgets[i] - st.tx_energy[i]) /
                                (cfg.energy_per_task * cfg.slot_scale()));
  return caps;
}

// Delay minimization with a hard energy budget in every slot.
inline Decision ssc_decision(const NetworkConfig& cfg, const SlotState& st) {
  const auto caps = ssc_workload_caps(cfg, st);
  auto a = admit(cfg, st, caps);
  SlotState blind = a.admitted;
  std::fill(blind.deficits.begin(), blind.deficits.end(), 0.0);
  CentralOptions opt;
  opt.workload_caps = caps;
  const auto r = solve_central(cfg, blind, opt);
  Decision d{realize_profile(r.allocation, a.admitted), std::move(a.admitted), std::move(a.dropped)};
  d.iterations = r.iterations;
  return d;
}

inline OffloadProfile ssc_profile(const NetworkConfig& cfg, const SlotState& st) {
  return ssc_decision(cfg, st).profile;
}

}  // namespace peeroff

#endif  // PEEROFF_BENCHMARKS_HPP
