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

#ifndef PEEROFF_POLICIES_HPP
#define PEEROFF_POLICIES_HPP

#include <string>
#include <vector>

#include "peeroff/benchmarks.hpp"
#include "peeroff/central.hpp"
#include "peeroff/error.hpp"
#include "peeroff/game.hpp"
#include "peeroff/lyapunov.hpp"

namespace peeroff {

inline Decision open_c_decision(const NetworkConfig& cfg, const SlotState& st) {
  auto a = admit(cfg, st);
  const auto r = solve_central(cfg, a.admitted);
  Decision d{realize_profile(r.allocation, a.admitted), std::move(a.admitted), std::move(a.dropped)};
  d.iterations = r.iterations;
  return d;
}

// Round-robin equilibrium; with measure_poa the centralized optimum of the
// same admitted slot is solved as well.
inline Decision open_a_decision(const NetworkConfig& cfg, const SlotState& st, bool with_poa,
                                const GameOptions& opt = {}) {
  auto a = admit(cfg, st);
  auto g = round_robin_ne(cfg, a.admitted, opt);
  Decision d{std::move(g.beta), std::move(a.admitted), std::move(a.dropped)};
  d.iterations = g.rounds;
  if (with_poa) {
    const auto star = realize_profile(solve_per_slot_centralized(cfg, d.admitted), d.admitted);
    d.poa = measure_poa(d.profile, star, cfg, d.admitted);
    d.reference_objective = per_slot_objective(star, cfg, d.admitted).value;
  }
  return d;
}

inline const std::vector<std::string>& policy_names() {
  static const std::vector<std::string> names{"open_c", "open_a", "nop", "d_optimal", "ssc"};
  return names;
}

inline Policy make_policy(const std::string& name, bool with_poa = false) {
  if (name == "open_c") return {name, open_c_decision};
  if (name == "open_a")
    return {name, [with_poa](const NetworkConfig& c, const SlotState& s) {
              return open_a_decision(c, s, with_poa);
            }};
  if (name == "nop") return {name, nop_decision};
  if (name == "d_optimal") return {name, delay_optimal_decision};
  if (name == "ssc") return {name, ssc_decision};
  throw ParameterError("unknown policy '" + name + "'");
}

}  // namespace peeroff

#endif  // PEEROFF_POLICIES_HPP
