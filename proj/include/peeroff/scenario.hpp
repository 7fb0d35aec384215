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

#ifndef PEEROFF_SCENARIO_HPP
#define PEEROFF_SCENARIO_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "peeroff/error.hpp"
#include "peeroff/model.hpp"

namespace peeroff {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

inline double distance(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

struct Topology {
  double width = 100.0;
  double height = 100.0;
  std::vector<Point> sbs;
  int regenerations = 0;  // empty draws skipped
};

struct RadioParams {
  double bandwidth_hz = 20e6;
  double noise_dbm_per_hz = -174.0;
  double ue_power_dbm = 10.0;
  double sbs_power_dbm = 20.0;
  double frequency_mhz = 900.0;
  double path_loss_exponent = 20.0;  // N_L
  double task_bits = 0.2e6;
  double downlink_bits_max = 1e6;

  double noise_watts() const { return dbm_to_watts(noise_dbm_per_hz) * bandwidth_hz; }
};

enum class ArrivalKind { IidUniform, Grid, Bursty, Markov };

inline ArrivalKind parse_arrival_kind(const std::string& s) {
  if (s == "iid_uniform") return ArrivalKind::IidUniform;
  if (s == "grid") return ArrivalKind::Grid;
  if (s == "bursty") return ArrivalKind::Bursty;
  if (s == "markov") return ArrivalKind::Markov;
  throw ParameterError("unknown arrival model '" + s + "'");
}

inline const char* to_string(ArrivalKind k) {
  switch (k) {
    case ArrivalKind::IidUniform: return "iid_uniform";
    case ArrivalKind::Grid: return "grid";
    case ArrivalKind::Bursty: return "bursty";
    case ArrivalKind::Markov: return "markov";
  }
  return "?";
}

struct ArrivalModel {
  ArrivalKind kind = ArrivalKind::IidUniform;
  double rate_max = 1.5;  // pi_max, tasks/sec per UE
  // grid
  int grid_cells = 4;  // per side
  double grid_mean = 10.0;
  double grid_sigma_max = 10.0;
  double grid_sigma_fraction = 0.0;
  // bursty
  int burst_on = 3;
  int burst_off = 12;
  // markov; the two rates are fractions of rate_max
  double markov_low = 0.125;
  double markov_high = 0.875;
  double markov_stay = 0.9;
  std::size_t markov_pool = 600;
};

struct ScenarioConfig {
  double width = 100.0;
  double height = 100.0;
  double density = 1e-3;
  int ue_min = 200;
  int ue_max = 600;
  int nearest_k = 3;
  RadioParams radio;
  ArrivalModel arrivals;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(width > 0.0 && height > 0.0)) throw ParameterError("area must be positive");
    if (!(density > 0.0)) throw ParameterError("PPP density must be positive");
    if (ue_min < 0 || ue_max < ue_min) throw ParameterError("UE range must satisfy 0 <= min <= max");
    if (nearest_k < 1) throw ParameterError("nearest_k must be at least 1");
    if (!(arrivals.rate_max >= 0.0)) throw ParameterError("rate_max must be non-negative");
    if (arrivals.grid_cells < 1) throw ParameterError("grid_cells must be at least 1");
    if (arrivals.burst_on < 0 || arrivals.burst_off < 0 || arrivals.burst_on + arrivals.burst_off == 0)
      throw ParameterError("burst lengths must be non-negative and not both zero");
    if (!(arrivals.markov_stay >= 0.0 && arrivals.markov_stay <= 1.0))
      throw ParameterError("markov_stay must lie in [0, 1]");
    if (!(arrivals.markov_low >= 0.0 && arrivals.markov_high <= 1.0 &&
          arrivals.markov_low <= arrivals.markov_high))
      throw ParameterError("markov rates must satisfy 0 <= low <= high <= 1");
    if (static_cast<std::size_t>(ue_max) > arrivals.markov_pool &&
        arrivals.kind == ArrivalKind::Markov)
      throw ParameterError("markov_pool must cover ue_max");
    if (!(radio.bandwidth_hz > 0.0 && radio.frequency_mhz > 0.0 && radio.task_bits >= 0.0 &&
          radio.downlink_bits_max >= 0.0))
      throw ParameterError("radio parameters must be positive");
  }
};

// Independent generator for a (seed, stream, index) triple.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

namespace rng_stream {
inline constexpr std::uint64_t kTopology = 1, kSlot = 2, kGrid = 3, kMarkov = 4;
}

// Homogeneous PPP over the area; an empty draw is redrawn with the next
// sub-seed.
inline Topology generate_topology(double width, double height, double density, std::uint64_t seed) {
  if (!(width > 0.0 && height > 0.0 && density > 0.0))
    throw ParameterError("area and density must be positive");
  Topology t{width, height, {}, 0};
  for (std::uint64_t sub = 0;; ++sub) {
    auto rng = make_rng(seed, rng_stream::kTopology, sub);
    std::poisson_distribution<int> count(density * width * height);
    const int n = count(rng);
    if (n == 0) {
      ++t.regenerations;
      if (t.regenerations > 100000) throw ParameterError("PPP keeps drawing zero SBSs");
      continue;
    }
    std::uniform_real_distribution<double> ux(0.0, width), uy(0.0, height);
    t.sbs.resize(n);
    for (auto& p : t.sbs) {
      p.x = ux(rng);
      p.y = uy(rng);
    }
    return t;
  }
}

struct UeSet {
  std::vector<Point> position;
  std::vector<std::size_t> sbs;
};

// Uniform positions; each UE picks uniformly among its k nearest SBSs.
inline UeSet scatter_and_assign_ues(const Topology& topo, std::size_t n_ues, int k,
                                    std::mt19937_64& rng) {
  if (topo.sbs.empty()) throw ParameterError("topology has no SBS");
  UeSet u;
  u.position.resize(n_ues);
  u.sbs.resize(n_ues);
  std::uniform_real_distribution<double> ux(0.0, topo.width), uy(0.0, topo.height);
  const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), topo.sbs.size());
  std::vector<std::size_t> order(topo.sbs.size());
  for (std::size_t m = 0; m < n_ues; ++m) {
    u.position[m] = {ux(rng), uy(rng)};
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + kk, order.end(), [&](auto a, auto b) {
      const double da = distance(u.position[m], topo.sbs[a]);
      const double db = distance(u.position[m], topo.sbs[b]);
      return da < db || (da == db && a < b);
    });
    std::uniform_int_distribution<std::size_t> pick(0, kk - 1);
    u.sbs[m] = order[pick(rng)];
  }
  return u;
}

// Indoor path loss in dB; distances below 1 m count as 1 m.
inline double path_loss_db(double distance_m, double frequency_mhz, double exponent) {
  if (!(distance_m >= 0.0) || !(frequency_mhz > 0.0))
    throw ParameterError("distance must be non-negative and frequency positive");
  const double d = std::max(distance_m, 1.0);
  return 20.0 * std::log10(frequency_mhz) + exponent * std::log10(d) - 28.0;
}

inline double channel_gain(double distance_m, double frequency_mhz, double exponent) {
  return std::pow(10.0, -path_loss_db(distance_m, frequency_mhz, exponent) / 10.0);
}

struct LinkCosts {
  std::vector<double> uplink_delay;  // D^u_i
  std::vector<double> tx_energy;     // E^tx_i, Wh
  std::size_t excluded = 0;          // UEs dropped for a zero-rate link
};

// D^u_i = sum_m s pi_m / r^u_m, E^tx_i = sum_m P^d w_m / r^d_m (J -> Wh).
inline LinkCosts slot_link_costs(const Topology& topo, const UeSet& ues,
                                 const std::vector<double>& rates,
                                 const std::vector<double>& downlink_bits, const RadioParams& radio,
                                 std::vector<bool>* excluded = nullptr) {
  const std::size_t n = topo.sbs.size();
  LinkCosts c{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0};
  if (excluded) excluded->assign(ues.sbs.size(), false);
  const double noise = radio.noise_watts();
  const double pu = dbm_to_watts(radio.ue_power_dbm), pd = dbm_to_watts(radio.sbs_power_dbm);
  for (std::size_t m = 0; m < ues.sbs.size(); ++m) {
    const std::size_t i = ues.sbs[m];
    const double h = channel_gain(distance(ues.position[m], topo.sbs[i]), radio.frequency_mhz,
                                  radio.path_loss_exponent);
    const double ru = h > 0.0 ? downlink_rate(pu, h, noise, radio.bandwidth_hz) : 0.0;
    const double rd = h > 0.0 ? downlink_rate(pd, h, noise, radio.bandwidth_hz) : 0.0;
    if (!(ru > 0.0) || !(rd > 0.0) || !std::isfinite(ru) || !std::isfinite(rd)) {
      ++c.excluded;
      if (excluded) (*excluded)[m] = true;
      continue;
    }
    c.uplink_delay[i] += radio.task_bits * rates[m] / ru;
    c.tx_energy[i] += pd * downlink_bits[m] / rd / 3600.0;
  }
  return c;
}

// Everything drawn for one slot, kept for inspection.
struct SlotDraw {
  UeSet ues;
  std::vector<double> rates;
  std::vector<double> downlink_bits;
  SlotState state;
  std::size_t excluded = 0;
};

class ScenarioStream {
 public:
  explicit ScenarioStream(ScenarioConfig cfg)
      : cfg_(std::move(cfg)),
        topo_((cfg_.validate(), generate_topology(cfg_.width, cfg_.height, cfg_.density, cfg_.seed))) {
    const auto& a = cfg_.arrivals;
    if (a.kind == ArrivalKind::Grid) {
      auto rng = make_rng(cfg_.seed, rng_stream::kGrid);
      const double sigma = a.grid_sigma_fraction * a.grid_sigma_max;
      std::normal_distribution<double> nd(a.grid_mean, sigma > 0.0 ? sigma : 1.0);
      grid_rate_.resize(static_cast<std::size_t>(a.grid_cells * a.grid_cells));
      for (auto& r : grid_rate_) {
        const double mean = sigma > 0.0 ? nd(rng) : a.grid_mean;
        r = std::clamp(mean * (a.rate_max / 2.0) / a.grid_mean, 0.0, a.rate_max);
      }
    }
    if (a.kind == ArrivalKind::Markov) {
      auto rng = make_rng(cfg_.seed, rng_stream::kMarkov);
      std::bernoulli_distribution half(0.5);
      markov_high_.resize(a.markov_pool);
      for (std::size_t m = 0; m < a.markov_pool; ++m) markov_high_[m] = half(rng);
    }
  }

  const Topology& topology() const { return topo_; }
  const ScenarioConfig& config() const { return cfg_; }
  std::size_t n_sbs() const { return topo_.sbs.size(); }
  const std::vector<double>& grid_rates() const { return grid_rate_; }

  SlotDraw draw() {
    const std::size_t t = t_++;
    auto rng = make_rng(cfg_.seed, rng_stream::kSlot, t);
    SlotDraw d;
    std::uniform_int_distribution<int> count(cfg_.ue_min, cfg_.ue_max);
    const auto n_ues = static_cast<std::size_t>(count(rng));
    d.ues = scatter_and_assign_ues(topo_, n_ues, cfg_.nearest_k, rng);
    d.rates = rates(t, d.ues, rng);
    std::uniform_real_distribution<double> wd(0.0, cfg_.radio.downlink_bits_max);
    d.downlink_bits.resize(n_ues);
    for (auto& w : d.downlink_bits) w = wd(rng);
    std::vector<bool> dropped;
    const auto links = slot_link_costs(topo_, d.ues, d.rates, d.downlink_bits, cfg_.radio, &dropped);
    d.excluded = links.excluded;
    d.state = SlotState::idle(n_sbs());
    d.state.slot_index = t;
    for (std::size_t m = 0; m < n_ues; ++m)
      if (!dropped[m]) d.state.arrivals[d.ues.sbs[m]] += d.rates[m];
    d.state.uplink_delay = links.uplink_delay;
    d.state.tx_energy = links.tx_energy;
    return d;
  }

  std::optional<SlotState> next() { return draw().state; }

 private:
  std::vector<double> rates(std::size_t t, const UeSet& ues, std::mt19937_64& rng) {
    const auto& a = cfg_.arrivals;
    std::vector<double> r(ues.sbs.size(), 0.0);
    switch (a.kind) {
      case ArrivalKind::IidUniform: {
        std::uniform_real_distribution<double> u(0.0, a.rate_max);
        for (auto& x : r) x = u(rng);
        break;
      }
      case ArrivalKind::Grid: {
        const int g = a.grid_cells;
        for (std::size_t m = 0; m < r.size(); ++m) {
          const int cx = std::min(g - 1, static_cast<int>(ues.position[m].x / topo_.width * g));
          const int cy = std::min(g - 1, static_cast<int>(ues.position[m].y / topo_.height * g));
          r[m] = grid_rate_[static_cast<std::size_t>(cy * g + cx)];
        }
        break;
      }
      case ArrivalKind::Bursty: {
        const int period = a.burst_on + a.burst_off;
        const bool on = static_cast<int>(t % static_cast<std::size_t>(period)) < a.burst_on;
        std::fill(r.begin(), r.end(), on ? a.rate_max : a.rate_max / 8.0);
        break;
      }
      case ArrivalKind::Markov: {
        // Every chain in the pool moves once per slot.
        std::bernoulli_distribution stay(a.markov_stay);
        if (t > 0)
          for (std::size_t m = 0; m < markov_high_.size(); ++m)
            if (!stay(rng)) markov_high_[m] = !markov_high_[m];
        for (std::size_t m = 0; m < r.size(); ++m)
          r[m] = (markov_high_[m] ? a.markov_high : a.markov_low) * a.rate_max;
        break;
      }
    }
    return r;
  }

  ScenarioConfig cfg_;
  Topology topo_;
  std::vector<double> grid_rate_;
  std::vector<bool> markov_high_;
  std::size_t t_ = 0;
};

}  // namespace peeroff

#endif  // PEEROFF_SCENARIO_HPP
