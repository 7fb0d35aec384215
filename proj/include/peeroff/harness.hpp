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

#ifndef PEEROFF_HARNESS_HPP
#define PEEROFF_HARNESS_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "peeroff/central.hpp"
#include "peeroff/error.hpp"
#include "peeroff/lyapunov.hpp"
#include "peeroff/model.hpp"
#include "peeroff/oracle.hpp"
#include "peeroff/policies.hpp"
#include "peeroff/scenario.hpp"

namespace peeroff {

// --- configuration ----------------------------------------------------------

struct NetworkParams {
  double cpu_hz = 3e9;
  double cycles_per_task = 40e6;
  double lan_delay = 0.2;             // sec per task
  double energy_per_task = 9e-5;      // Wh per task
  double energy_budget_per_hour = 22.0;  // Wh per hour, prorated per slot
  double energy_cap = 22.0 * 60.0 / 3600.0 * 10.0;  // Wh per slot, ten budgets, checked post hoc
  double delay_cap = 1e6;             // per-SBS delay per slot, checked post hoc
  double control_v = 50.0;
  double slot_duration = 60.0;        // sec

  double service_rate() const { return cpu_hz / cycles_per_task; }
  double budget_per_slot() const { return energy_budget_per_hour * slot_duration / 3600.0; }
};

struct ExperimentParams {
  std::vector<std::string> policies{"open_c"};
  std::size_t horizon = 3000;
  std::size_t replications = 1;
  std::vector<std::uint64_t> seeds{23};
  std::string output = "out";
  std::size_t workers = 1;
  bool measure_poa = false;
  std::string sweep_parameter = "control_v";
  std::vector<double> sweep_values{1.0, 10.0, 50.0, 100.0, 500.0};
};

struct ExperimentConfig {
  ScenarioConfig scenario;
  NetworkParams network;
  ExperimentParams experiment;

  std::uint64_t replication_seed(std::size_t k) const {
    const auto& s = experiment.seeds;
    return s.size() == 1 ? s[0] + k : s.at(k);
  }

  void validate() const {
    auto fail = [](const std::string& m) { throw HarnessError(HarnessError::Kind::Config, m); };
    try {
      scenario.validate();
    } catch (const ParameterError& e) {
      fail(e.what());
    }
    const auto& e = experiment;
    if (e.horizon < 1) fail("experiment.horizon must be at least 1");
    if (e.replications < 1) fail("experiment.replications must be at least 1");
    if (e.workers < 1) fail("experiment.workers must be at least 1");
    if (e.seeds.empty()) fail("experiment.seeds must not be empty");
    if (e.seeds.size() != 1 && e.seeds.size() != e.replications)
      fail("experiment.seeds must hold one seed or one per replication");
    if (e.policies.empty()) fail("experiment.policies must not be empty");
    const auto& names = policy_names();
    std::set<std::string> seen;
    for (const auto& p : e.policies) {
      if (std::find(names.begin(), names.end(), p) == names.end())
        fail("unknown policy '" + p + "'");
      if (!seen.insert(p).second) fail("policy '" + p + "' listed twice");
    }
    const auto& n = network;
    if (!(n.cpu_hz > 0.0 && n.cycles_per_task > 0.0)) fail("network cpu_hz and cycles_per_task must be positive");
    if (!(n.control_v > 0.0)) fail("network.control_v must be positive");
    try {
      make_network(1).validate();
    } catch (const ParameterError& ex) {
      fail(std::string("network: ") + ex.what());
    }
  }

  NetworkConfig make_network(std::size_t n) const {
    NetworkConfig c;
    c.service_rates.assign(n, network.service_rate());
    c.lan_delay = network.lan_delay;
    c.energy_per_task = network.energy_per_task;
    c.energy_budgets.assign(n, network.budget_per_slot());
    c.energy_cap = network.energy_cap;
    c.delay_cap = network.delay_cap;
    c.control_v = network.control_v;
    c.slot_duration = network.slot_duration;
    return c;
  }
};

namespace detail {

using nlohmann::json;

// Reads keys from one JSON object and rejects any key it did not read.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw HarnessError(HarnessError::Kind::Config, path_ + " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    used_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw HarnessError(HarnessError::Kind::Config,
                         path_ + "." + key + ": " + e.what());
    }
  }

  bool has(const char* key) const { return j_.contains(key); }

  Section sub(const char* key) {
    used_.insert(key);
    static const json empty = json::object();
    auto it = j_.find(key);
    return Section(it == j_.end() ? empty : *it, path_ + "." + key);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key()))
        throw HarnessError(HarnessError::Kind::Config, "unknown key " + path_ + "." + it.key());
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& root) {
  ExperimentConfig c;
  detail::Section top(root, "config");

  auto sc = top.sub("scenario");
  std::vector<double> area{c.scenario.width, c.scenario.height};
  sc.get("area", area);
  if (area.size() != 2) throw HarnessError(HarnessError::Kind::Config, "scenario.area needs two values");
  c.scenario.width = area[0];
  c.scenario.height = area[1];
  sc.get("density", c.scenario.density);
  sc.get("ue_min", c.scenario.ue_min);
  sc.get("ue_max", c.scenario.ue_max);
  sc.get("nearest_k", c.scenario.nearest_k);
  {
    auto a = sc.sub("arrival");
    auto& m = c.scenario.arrivals;
    std::string kind = to_string(m.kind);
    a.get("model", kind);
    try {
      m.kind = parse_arrival_kind(kind);
    } catch (const ParameterError& e) {
      throw HarnessError(HarnessError::Kind::Config, e.what());
    }
    a.get("rate_max", m.rate_max);
    a.get("grid_cells", m.grid_cells);
    a.get("grid_mean", m.grid_mean);
    a.get("grid_sigma_max", m.grid_sigma_max);
    a.get("grid_sigma_fraction", m.grid_sigma_fraction);
    a.get("burst_on", m.burst_on);
    a.get("burst_off", m.burst_off);
    a.get("markov_low", m.markov_low);
    a.get("markov_high", m.markov_high);
    a.get("markov_stay", m.markov_stay);
    a.get("markov_pool", m.markov_pool);
    a.finish();
  }
  {
    auto r = sc.sub("radio");
    auto& p = c.scenario.radio;
    r.get("bandwidth_hz", p.bandwidth_hz);
    r.get("noise_dbm_per_hz", p.noise_dbm_per_hz);
    r.get("ue_power_dbm", p.ue_power_dbm);
    r.get("sbs_power_dbm", p.sbs_power_dbm);
    r.get("frequency_mhz", p.frequency_mhz);
    r.get("path_loss_exponent", p.path_loss_exponent);
    r.get("task_bits", p.task_bits);
    r.get("downlink_bits_max", p.downlink_bits_max);
    r.finish();
  }
  sc.finish();

  auto nw = top.sub("network");
  auto& n = c.network;
  nw.get("cpu_hz", n.cpu_hz);
  nw.get("cycles_per_task", n.cycles_per_task);
  nw.get("lan_delay", n.lan_delay);
  nw.get("energy_per_task", n.energy_per_task);
  nw.get("energy_budget_per_hour", n.energy_budget_per_hour);
  nw.get("energy_cap", n.energy_cap);
  nw.get("delay_cap", n.delay_cap);
  nw.get("control_v", n.control_v);
  nw.get("slot_duration", n.slot_duration);
  nw.finish();

  auto ex = top.sub("experiment");
  auto& e = c.experiment;
  ex.get("policies", e.policies);
  ex.get("horizon", e.horizon);
  ex.get("replications", e.replications);
  ex.get("seeds", e.seeds);
  ex.get("output", e.output);
  ex.get("workers", e.workers);
  ex.get("measure_poa", e.measure_poa);
  {
    auto sw = ex.sub("sweep");
    sw.get("parameter", e.sweep_parameter);
    sw.get("values", e.sweep_values);
    sw.finish();
  }
  ex.finish();
  top.finish();
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw HarnessError(HarnessError::Kind::Io, "cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw HarnessError(HarnessError::Kind::Config, path + ": " + e.what());
  }
  return parse_config(j);
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  const auto& s = c.scenario;
  const auto& a = s.arrivals;
  const auto& r = s.radio;
  const auto& n = c.network;
  const auto& e = c.experiment;
  return {
      {"scenario",
       {{"area", {s.width, s.height}},
        {"density", s.density},
        {"ue_min", s.ue_min},
        {"ue_max", s.ue_max},
        {"nearest_k", s.nearest_k},
        {"arrival",
         {{"model", to_string(a.kind)},
          {"rate_max", a.rate_max},
          {"grid_cells", a.grid_cells},
          {"grid_mean", a.grid_mean},
          {"grid_sigma_max", a.grid_sigma_max},
          {"grid_sigma_fraction", a.grid_sigma_fraction},
          {"burst_on", a.burst_on},
          {"burst_off", a.burst_off},
          {"markov_low", a.markov_low},
          {"markov_high", a.markov_high},
          {"markov_stay", a.markov_stay},
          {"markov_pool", a.markov_pool}}},
        {"radio",
         {{"bandwidth_hz", r.bandwidth_hz},
          {"noise_dbm_per_hz", r.noise_dbm_per_hz},
          {"ue_power_dbm", r.ue_power_dbm},
          {"sbs_power_dbm", r.sbs_power_dbm},
          {"frequency_mhz", r.frequency_mhz},
          {"path_loss_exponent", r.path_loss_exponent},
          {"task_bits", r.task_bits},
          {"downlink_bits_max", r.downlink_bits_max}}}}},
      {"network",
       {{"cpu_hz", n.cpu_hz},
        {"cycles_per_task", n.cycles_per_task},
        {"lan_delay", n.lan_delay},
        {"energy_per_task", n.energy_per_task},
        {"energy_budget_per_hour", n.energy_budget_per_hour},
        {"energy_cap", n.energy_cap},
        {"delay_cap", n.delay_cap},
        {"control_v", n.control_v},
        {"slot_duration", n.slot_duration}}},
      {"experiment",
       {{"policies", e.policies},
        {"horizon", e.horizon},
        {"replications", e.replications},
        {"seeds", e.seeds},
        {"output", e.output},
        {"workers", e.workers},
        {"measure_poa", e.measure_poa},
        {"sweep", {{"parameter", e.sweep_parameter}, {"values", e.sweep_values}}}}}};
}

// Sets one numeric parameter by name; used by the sweep.
inline void set_parameter(ExperimentConfig& c, const std::string& name, double value) {
  if (name == "control_v")
    c.network.control_v = value;
  else if (name == "grid_sigma_fraction")
    c.scenario.arrivals.grid_sigma_fraction = value;
  else if (name == "rate_max")
    c.scenario.arrivals.rate_max = value;
  else if (name == "lan_delay")
    c.network.lan_delay = value;
  else if (name == "energy_budget_per_hour")
    c.network.energy_budget_per_hour = value;
  else
    throw HarnessError(HarnessError::Kind::Config, "cannot sweep parameter '" + name + "'");
}

// --- scenario replay --------------------------------------------------------

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::vector<SlotState> generate_slots(const ScenarioConfig& sc, std::size_t horizon) {
  ScenarioStream s(sc);
  std::vector<SlotState> slots;
  slots.reserve(horizon);
  for (std::size_t t = 0; t < horizon; ++t) slots.push_back(*s.next());
  return slots;
}

// One row per (slot, SBS): t,sbs,arrivals,uplink_delay,tx_energy.
inline void write_scenario(const std::string& path, const std::vector<SlotState>& slots) {
  std::ofstream out(path);
  if (!out) throw HarnessError(HarnessError::Kind::Io, "cannot write " + path);
  out << "t,sbs,arrivals,uplink_delay,tx_energy\n";
  for (std::size_t t = 0; t < slots.size(); ++t)
    for (std::size_t i = 0; i < slots[t].size(); ++i)
      out << t << ',' << i << ',' << format_double(slots[t].arrivals[i]) << ','
          << format_double(slots[t].uplink_delay[i]) << ',' << format_double(slots[t].tx_energy[i])
          << '\n';
  if (!out) throw HarnessError(HarnessError::Kind::Io, "write failed for " + path);
}

inline std::vector<SlotState> read_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw HarnessError(HarnessError::Kind::Io, "cannot open " + path);
  auto bad = [&](std::size_t line, const std::string& why) {
    return HarnessError(HarnessError::Kind::Config,
                        path + ":" + std::to_string(line) + ": " + why);
  };
  std::string line;
  if (!std::getline(in, line) || line != "t,sbs,arrivals,uplink_delay,tx_energy")
    throw bad(1, "missing header");
  std::vector<SlotState> slots;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string f[5];
    for (auto& x : f)
      if (!std::getline(ls, x, ',')) throw bad(lineno, "expected 5 fields");
    std::size_t t = 0, i = 0;
    double v[3];
    try {
      t = std::stoul(f[0]);
      i = std::stoul(f[1]);
      for (int k = 0; k < 3; ++k) v[k] = std::stod(f[2 + k]);
    } catch (const std::exception&) {
      throw bad(lineno, "malformed number");
    }
    if (i == 0) {
      if (t != slots.size()) throw bad(lineno, "slots must be consecutive from 0");
      slots.emplace_back();
      slots.back().slot_index = t;
    } else if (slots.empty() || t + 1 != slots.size() || i != slots.back().size()) {
      throw bad(lineno, "SBS rows must be consecutive from 0");
    }
    auto& s = slots.back();
    s.arrivals.push_back(v[0]);
    s.uplink_delay.push_back(v[1]);
    s.tx_energy.push_back(v[2]);
    s.deficits.push_back(0.0);
  }
  if (slots.empty()) throw bad(lineno, "no slots");
  const std::size_t n = slots.front().size();
  for (const auto& s : slots)
    if (s.size() != n) throw bad(lineno, "SBS count changes between slots");
  return slots;
}

// --- runs and summaries -----------------------------------------------------

inline RunResult run_policy(const std::string& name, bool with_poa, const std::vector<SlotState>& slots,
                            const NetworkConfig& cfg) {
  VectorStream stream(slots);
  return run_open(make_policy(name, with_poa), stream, cfg, slots.size());
}

struct RunSummary {
  std::string policy;
  std::size_t replication = 0;
  std::uint64_t seed = 0;
  std::size_t n_sbs = 0;
  std::size_t horizon = 0;
  double avg_delay = 0.0;
  double avg_computation_delay = 0.0;
  double avg_congestion_delay = 0.0;
  double avg_communication_delay = 0.0;
  double avg_energy = 0.0;
  double avg_deficit = 0.0;       // time average of sum_i q_i(t)
  double final_deficit_rate = 0.0;  // sum_i q_i(T) / T
  double avg_lan_traffic = 0.0;
  double avg_objective = 0.0;
  double avg_dropped = 0.0;
  double poa_mean = std::numeric_limits<double>::quiet_NaN();
  double poa_max = std::numeric_limits<double>::quiet_NaN();
  std::size_t solver_errors = 0;
  std::size_t energy_cap_violations = 0;
  std::size_t delay_cap_violations = 0;
  // Wall clock; written to the timing files only.
  double mean_solve_ms = 0.0;
  double max_solve_ms = 0.0;
};

inline RunSummary summarize(const std::string& policy, std::size_t rep, std::uint64_t seed,
                            const RunResult& r) {
  RunSummary s;
  s.policy = policy;
  s.replication = rep;
  s.seed = seed;
  s.horizon = r.slots.size();
  s.n_sbs = r.final_deficits.size();
  double poa_sum = 0.0;
  std::size_t poa_n = 0;
  for (const auto& m : r.slots) {
    s.avg_delay += m.total_delay;
    s.avg_computation_delay += m.computation_delay;
    s.avg_congestion_delay += m.congestion_delay;
    s.avg_communication_delay += m.communication_delay;
    s.avg_energy += m.total_energy;
    s.avg_deficit += m.total_deficit;
    s.avg_lan_traffic += m.lan_traffic;
    s.avg_objective += m.objective;
    s.avg_dropped += m.dropped;
    s.solver_errors += m.solver_error;
    s.energy_cap_violations += static_cast<std::size_t>(m.energy_cap_violations);
    s.delay_cap_violations += static_cast<std::size_t>(m.delay_cap_violations);
    if (!std::isnan(m.poa)) {
      poa_sum += m.poa;
      ++poa_n;
      s.poa_max = std::isnan(s.poa_max) ? m.poa : std::max(s.poa_max, m.poa);
    }
    s.mean_solve_ms += m.solve_micros / 1000.0;
    s.max_solve_ms = std::max(s.max_solve_ms, m.solve_micros / 1000.0);
  }
  const double t = static_cast<double>(std::max<std::size_t>(s.horizon, 1));
  for (double* x : {&s.avg_delay, &s.avg_computation_delay, &s.avg_congestion_delay,
                    &s.avg_communication_delay, &s.avg_energy, &s.avg_deficit, &s.avg_lan_traffic,
                    &s.avg_objective, &s.avg_dropped, &s.mean_solve_ms})
    *x /= t;
  double final_q = 0.0;
  for (double q : r.final_deficits) final_q += q;
  s.final_deficit_rate = final_q / t;
  if (poa_n > 0) s.poa_mean = poa_sum / static_cast<double>(poa_n);
  return s;
}

// --- CSV output -------------------------------------------------------------

namespace detail {

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw HarnessError(HarnessError::Kind::Io, "cannot write " + path);
  return out;
}

inline void close_out(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw HarnessError(HarnessError::Kind::Io, "write failed for " + path);
}

}  // namespace detail

inline std::string metrics_header(std::size_t n) {
  std::string h =
      "t,total_delay,computation_delay,congestion_delay,communication_delay,total_energy,"
      "total_deficit,lan_traffic,objective,reference_objective,poa,dropped,iterations,"
      "energy_cap_violations,delay_cap_violations,solver_error";
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = std::to_string(i);
    h += ",omega_" + k + ",energy_" + k + ",deficit_" + k + ",delay_" + k + ",dropped_" + k;
  }
  return h;
}

inline std::string metrics_row(const SlotMetrics& m) {
  std::string r = std::to_string(m.t);
  for (double x : {m.total_delay, m.computation_delay, m.congestion_delay, m.communication_delay,
                   m.total_energy, m.total_deficit, m.lan_traffic, m.objective,
                   m.reference_objective, m.poa, m.dropped})
    r += "," + format_double(x);
  r += "," + std::to_string(m.iterations) + "," + std::to_string(m.energy_cap_violations) + "," +
       std::to_string(m.delay_cap_violations) + "," + (m.solver_error ? "1" : "0");
  for (const auto& s : m.sbs)
    for (double x : {s.omega, s.energy, s.deficit, s.delay.total(), s.dropped})
      r += "," + format_double(x);
  return r;
}

inline void write_metrics(const std::string& path, const RunResult& r) {
  auto out = detail::open_out(path);
  out << metrics_header(r.final_deficits.size()) << '\n';
  for (const auto& m : r.slots) out << metrics_row(m) << '\n';
  detail::close_out(out, path);
}

inline void write_timing(const std::string& path, const RunResult& r) {
  auto out = detail::open_out(path);
  out << "t,solve_micros\n";
  for (const auto& m : r.slots) out << m.t << ',' << format_double(m.solve_micros) << '\n';
  detail::close_out(out, path);
}

inline const char* summary_header() {
  return "policy,replication,seed,n_sbs,horizon,avg_delay,avg_computation_delay,"
         "avg_congestion_delay,avg_communication_delay,avg_energy,avg_deficit,"
         "final_deficit_rate,avg_lan_traffic,avg_objective,avg_dropped,poa_mean,poa_max,"
         "solver_errors,energy_cap_violations,delay_cap_violations";
}

inline std::string summary_row(const RunSummary& s) {
  std::string r = s.policy + "," + std::to_string(s.replication) + "," + std::to_string(s.seed) +
                  "," + std::to_string(s.n_sbs) + "," + std::to_string(s.horizon);
  for (double x : {s.avg_delay, s.avg_computation_delay, s.avg_congestion_delay,
                   s.avg_communication_delay, s.avg_energy, s.avg_deficit, s.final_deficit_rate,
                   s.avg_lan_traffic, s.avg_objective, s.avg_dropped, s.poa_mean, s.poa_max})
    r += "," + format_double(x);
  r += "," + std::to_string(s.solver_errors) + "," + std::to_string(s.energy_cap_violations) + "," +
       std::to_string(s.delay_cap_violations);
  return r;
}

inline void write_summary(const std::string& path, const std::vector<RunSummary>& rows,
                          const std::string& prefix_header = "",
                          const std::vector<std::string>& prefixes = {}) {
  auto out = detail::open_out(path);
  out << prefix_header << summary_header() << '\n';
  for (std::size_t k = 0; k < rows.size(); ++k)
    out << (prefixes.empty() ? "" : prefixes[k]) << summary_row(rows[k]) << '\n';
  detail::close_out(out, path);
}

inline void write_timing_summary(const std::string& path, const std::vector<RunSummary>& rows) {
  auto out = detail::open_out(path);
  out << "policy,replication,mean_solve_ms,max_solve_ms\n";
  for (const auto& s : rows)
    out << s.policy << ',' << s.replication << ',' << format_double(s.mean_solve_ms) << ','
        << format_double(s.max_solve_ms) << '\n';
  detail::close_out(out, path);
}

// Per-slot columns of several policies run on the same stream.
inline void write_comparison(const std::string& path, const std::vector<std::string>& policies,
                             const std::vector<RunResult>& runs) {
  auto out = detail::open_out(path);
  out << 't';
  for (const auto& p : policies)
    for (const char* f : {"delay", "energy", "deficit", "objective", "dropped"})
      out << ',' << p << '_' << f;
  out << '\n';
  const std::size_t horizon = runs.empty() ? 0 : runs.front().slots.size();
  for (std::size_t t = 0; t < horizon; ++t) {
    out << t;
    for (const auto& r : runs) {
      const auto& m = r.slots[t];
      for (double x : {m.total_delay, m.total_energy, m.total_deficit, m.objective, m.dropped})
        out << ',' << format_double(x);
    }
    out << '\n';
  }
  detail::close_out(out, path);
}

// --- experiments ------------------------------------------------------------

struct ReplicationOutput {
  std::size_t replication = 0;
  std::uint64_t seed = 0;
  std::vector<RunResult> runs;  // one per policy, in config order
  std::vector<RunSummary> summaries;
};

// Generates the replication's scenario once and replays it through every
// configured policy.
inline ReplicationOutput run_replication(const ExperimentConfig& c, std::size_t rep,
                                         const std::vector<SlotState>* replay = nullptr) {
  ReplicationOutput o;
  o.replication = rep;
  o.seed = c.replication_seed(rep);
  std::vector<SlotState> slots;
  if (replay) {
    if (replay->size() < c.experiment.horizon)
      throw HarnessError(HarnessError::Kind::Stream,
                         "replayed scenario has " + std::to_string(replay->size()) +
                             " slots but the horizon is " + std::to_string(c.experiment.horizon));
    slots.assign(replay->begin(), replay->begin() + static_cast<std::ptrdiff_t>(c.experiment.horizon));
  } else {
    auto sc = c.scenario;
    sc.seed = o.seed;
    slots = generate_slots(sc, c.experiment.horizon);
  }
  const auto net = c.make_network(slots.front().size());
  for (const auto& p : c.experiment.policies) {
    o.runs.push_back(run_policy(p, c.experiment.measure_poa, slots, net));
    o.summaries.push_back(summarize(p, rep, o.seed, o.runs.back()));
  }
  return o;
}

// Runs fn(k) for k in [0, count) on up to `workers` threads; the first
// exception is rethrown after all threads finish.
template <class Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (std::size_t k = next++; k < count; k = next++) {
      try {
        fn(k);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(workers, count));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < n; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

struct ExperimentOutput {
  std::vector<RunSummary> summaries;  // replication-major, policies in config order
};

// Writes <out>/<policy>_rep<k>.csv (+ _timing.csv) per run, compare_rep<k>.csv
// when several policies share a stream, summary.csv and timing_summary.csv.
inline ExperimentOutput run_experiment(const ExperimentConfig& c,
                                       const std::vector<SlotState>* replay = nullptr) {
  c.validate();
  const std::string dir = c.experiment.output;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw HarnessError(HarnessError::Kind::Io, "cannot create " + dir + ": " + ec.message());
  const std::size_t reps = c.experiment.replications;
  std::vector<std::vector<RunSummary>> per_rep(reps);
  parallel_for(reps, c.experiment.workers, [&](std::size_t k) {
    auto o = run_replication(c, k, replay);
    const auto& pol = c.experiment.policies;
    for (std::size_t p = 0; p < pol.size(); ++p) {
      const std::string base = dir + "/" + pol[p] + "_rep" + std::to_string(k);
      write_metrics(base + ".csv", o.runs[p]);
      write_timing(base + "_timing.csv", o.runs[p]);
    }
    if (pol.size() > 1)
      write_comparison(dir + "/compare_rep" + std::to_string(k) + ".csv", pol, o.runs);
    per_rep[k] = std::move(o.summaries);
  });
  ExperimentOutput out;
  for (auto& v : per_rep)
    for (auto& s : v) out.summaries.push_back(std::move(s));
  write_summary(dir + "/summary.csv", out.summaries);
  write_timing_summary(dir + "/timing_summary.csv", out.summaries);
  return out;
}

// Same-stream comparison of at least two policies.
inline ExperimentOutput compare_policies(const ExperimentConfig& c,
                                         const std::vector<SlotState>* replay = nullptr) {
  if (c.experiment.policies.size() < 2)
    throw HarnessError(HarnessError::Kind::Config, "compare needs at least two policies");
  return run_experiment(c, replay);
}

struct SweepPoint {
  double value = 0.0;
  std::vector<RunSummary> summaries;
};

// One experiment per value in <out>/<parameter>_<index>/, plus sweep.csv.
inline std::vector<SweepPoint> sweep(const ExperimentConfig& c) {
  const auto& e = c.experiment;
  if (e.sweep_values.empty())
    throw HarnessError(HarnessError::Kind::Config, "experiment.sweep.values is empty");
  std::vector<SweepPoint> points;
  std::vector<RunSummary> rows;
  std::vector<std::string> prefixes;
  for (std::size_t k = 0; k < e.sweep_values.size(); ++k) {
    auto ck = c;
    set_parameter(ck, e.sweep_parameter, e.sweep_values[k]);
    ck.experiment.output = e.output + "/" + e.sweep_parameter + "_" + std::to_string(k);
    auto o = run_experiment(ck);
    for (const auto& s : o.summaries) {
      rows.push_back(s);
      prefixes.push_back(e.sweep_parameter + "," + format_double(e.sweep_values[k]) + ",");
    }
    points.push_back({e.sweep_values[k], std::move(o.summaries)});
  }
  write_summary(e.output + "/sweep.csv", rows, "parameter,value,", prefixes);
  return points;
}

// --- solver validation ------------------------------------------------------

struct ValidationReport {
  std::size_t instances = 0;
  std::size_t failures = 0;
  double max_rel_gap = 0.0;
  double max_kkt_violation = 0.0;
  bool ok() const { return failures == 0; }
};

// Centralized solver against the exhaustive oracle on random 2-4 SBS slots.
inline ValidationReport validate_solvers(std::size_t count, std::uint64_t seed,
                                         double tolerance = 1e-6) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> nd(2, 4);
  std::uniform_real_distribution<double> mu_d(50.0, 100.0), load_d(0.0, 0.97), q_d(0.0, 60.0),
      du_d(0.0, 5.0), etx_d(0.0, 0.05), v_d(1.0, 100.0);
  std::bernoulli_distribution zero_q(0.3);
  ValidationReport rep;
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t n = nd(rng);
    auto cfg = NetworkConfig::uniform(n, 75.0, 0.2, 9e-5, 22.0 / 60.0, v_d(rng));
    auto st = SlotState::idle(n);
    for (std::size_t i = 0; i < n; ++i) {
      cfg.service_rates[i] = mu_d(rng);
      st.arrivals[i] = load_d(rng) * cfg.service_rates[i];
      st.deficits[i] = zero_q(rng) ? 0.0 : q_d(rng);
      st.uplink_delay[i] = du_d(rng);
      st.tx_energy[i] = etx_d(rng);
    }
    ++rep.instances;
    try {
      const auto r = solve_central(cfg, st);
      const auto o = brute_force_oracle(cfg, st);
      const double got = allocation_objective(r.allocation, cfg, st);
      const double gap = std::abs(got - o.objective) /
                         std::max({std::abs(got), std::abs(o.objective), 1e-300});
      rep.max_rel_gap = std::max(rep.max_rel_gap, gap);
      rep.max_kkt_violation = std::max(rep.max_kkt_violation, r.kkt_violation);
      const bool feasible = check_profile(realize_profile(r.allocation, st), cfg, st).ok;
      if (gap > tolerance || r.kkt_violation > tolerance || !feasible) ++rep.failures;
    } catch (const std::exception&) {
      ++rep.failures;
    }
  }
  return rep;
}

}  // namespace peeroff

#endif  // PEEROFF_HARNESS_HPP
