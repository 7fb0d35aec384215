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

// Walkthrough: one hand-built slot solved by every policy, then a short
// run on a generated scenario stream.

#include <cstdio>

#include "peeroff/harness.hpp"

using namespace peeroff;

int main() {
  // Three SBSs with 75 tasks/s of capacity; SBS 0 is nearly saturated.
  auto cfg = NetworkConfig::uniform(3, 75.0, 0.2, 9e-5, 22.0 * 60.0 / 3600.0, 50.0);
  auto st = SlotState::idle(3);
  st.arrivals = {70.0, 30.0, 10.0};
  st.deficits = {0.0, 0.0, 0.05};

  std::printf("single slot, arrivals 70 / 30 / 10 tasks/s\n");
  std::printf("%-10s %12s %10s %10s\n", "policy", "objective", "lan", "omega_0");
  for (const auto& name : policy_names()) {
    const auto d = make_policy(name).decide(cfg, st);
    const auto obj = per_slot_objective(d.profile, cfg, d.admitted);
    std::printf("%-10s %12.6f %10.4f %10.4f\n", name.c_str(), obj.value, d.profile.lan_traffic(),
                d.profile.post_workload(0));
  }

  const auto g = round_robin_ne(cfg, st);
  const auto verdict = verify_ne(g.beta, cfg, st, g.tolerance);
  std::printf("\nequilibrium after %d rounds, verified: %s\n", g.rounds, verdict.is_ne ? "yes" : "no");

  // Two hundred slots of the default scenario.
  ExperimentConfig exp;
  auto sc = exp.scenario;
  sc.seed = exp.replication_seed(0);
  const auto slots = generate_slots(sc, 200);
  const auto net = exp.make_network(slots.front().size());
  std::printf("\n%zu SBSs, 200 slots\n", slots.front().size());
  std::printf("%-10s %12s %12s %12s\n", "policy", "avg delay", "avg energy", "avg dropped");
  for (const auto& name : policy_names()) {
    const auto s = summarize(name, 0, 0, run_policy(name, false, slots, net));
    std::printf("%-10s %12.6f %12.6f %12.6f\n", name.c_str(), s.avg_delay, s.avg_energy, s.avg_dropped);
  }
  return 0;
}
