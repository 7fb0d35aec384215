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

#ifndef PEEROFF_TESTS_SUPPORT_HPP
#define PEEROFF_TESTS_SUPPORT_HPP

#include <cmath>
#include <random>
#include <vector>

#include "peeroff/model.hpp"

namespace peeroff::fixtures {

inline constexpr double kBudget = 22.0 * 60.0 / 3600.0;

inline NetworkConfig default_config(std::size_t n, double v = 50.0) {
  return NetworkConfig::uniform(n, 75.0, 0.2, 9e-5, kBudget, v);
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

struct Instance {
  NetworkConfig cfg;
  SlotState st;
};

// Random slot drawn around the default parameter ranges: service rates
// 50..100 tasks/s, load 0..97% of capacity, deficits 0..60 Wh.
inline Instance random_instance(std::mt19937_64& rng, std::size_t n, double max_load = 0.97) {
  std::uniform_real_distribution<double> mu_d(50.0, 100.0), load_d(0.0, max_load),
      q_d(0.0, 60.0), du_d(0.0, 5.0), etx_d(0.0, 0.05);
  Instance in{default_config(n), SlotState::idle(n)};
  for (std::size_t i = 0; i < n; ++i) {
    in.cfg.service_rates[i] = mu_d(rng);
    in.st.arrivals[i] = load_d(rng) * in.cfg.service_rates[i];
    in.st.deficits[i] = std::bernoulli_distribution(0.3)(rng) ? 0.0 : q_d(rng);
    in.st.uplink_delay[i] = du_d(rng);
    in.st.tx_energy[i] = etx_d(rng);
  }
  return in;
}

}  // namespace peeroff::fixtures

#endif  // PEEROFF_TESTS_SUPPORT_HPP
