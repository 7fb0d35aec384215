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

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "peeroff/harness.hpp"

namespace {

using namespace peeroff;

enum Exit { kOk = 0, kConfig = 2, kIo = 3, kSolver = 4 };

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> horizon;
  std::optional<std::size_t> replications;
  std::optional<std::size_t> workers;
  std::vector<std::string> policies;
  bool poa = false;
  std::string scenario_in;
  std::string scenario_out;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON experiment config (defaults when omitted)");
  cmd->add_option("--seed", o.seed, "Seed of the first replication");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--horizon", o.horizon, "Slots per replication");
  cmd->add_option("--replications", o.replications, "Number of replications");
  cmd->add_option("--workers", o.workers, "Replications run in parallel");
  cmd->add_option("--policy", o.policies, "Policy name; repeat for several")
      ->check(CLI::IsMember(policy_names()));
  cmd->add_flag("--poa", o.poa, "Solve the centralized optimum next to open_a and record PoA");
  cmd->add_option("--scenario-in", o.scenario_in, "Replay a recorded scenario file");
  cmd->add_option("--scenario-out", o.scenario_out, "Record the first replication's scenario");
}

ExperimentConfig resolve(const Overrides& o) {
  ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  auto& e = c.experiment;
  if (o.seed) e.seeds = {*o.seed};
  if (o.out) e.output = *o.out;
  if (o.horizon) e.horizon = *o.horizon;
  if (o.replications) e.replications = *o.replications;
  if (o.workers) e.workers = *o.workers;
  if (!o.policies.empty()) e.policies = o.policies;
  if (o.poa) e.measure_poa = true;
  c.validate();
  return c;
}

std::optional<std::vector<SlotState>> replay_for(const ExperimentConfig& c, const Overrides& o) {
  if (!o.scenario_out.empty()) {
    auto sc = c.scenario;
    sc.seed = c.replication_seed(0);
    write_scenario(o.scenario_out, generate_slots(sc, c.experiment.horizon));
  }
  if (o.scenario_in.empty()) return std::nullopt;
  return read_scenario(o.scenario_in);
}

void print_summaries(const std::vector<RunSummary>& rows, const std::string& prefix = "") {
  std::printf("%s%-10s %4s %6s %12s %12s %12s %10s %8s\n", prefix.c_str(), "policy", "rep", "n_sbs",
              "avg_delay", "avg_deficit", "avg_energy", "dropped", "poa");
  for (const auto& s : rows)
    std::printf("%s%-10s %4zu %6zu %12.6g %12.6g %12.6g %10.4g %8.4g\n", prefix.c_str(),
                s.policy.c_str(), s.replication, s.n_sbs, s.avg_delay, s.avg_deficit, s.avg_energy,
                s.avg_dropped, s.poa_mean);
}

int run_guarded(const std::function<void()>& body) {
  try {
    body();
    return kOk;
  } catch (const HarnessError& e) {
    std::cerr << "error: " << e.what() << '\n';
    switch (e.kind()) {
      case HarnessError::Kind::Io: return kIo;
      case HarnessError::Kind::Stream: return kSolver;
      case HarnessError::Kind::Config: return kConfig;
    }
    return kConfig;
  } catch (const ParameterError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const SolverError& e) {
    std::cerr << "solver error: " << e.what() << '\n';
    return kSolver;
  } catch (const FeasibilityError& e) {
    std::cerr << "solver error: " << e.what() << '\n';
    return kSolver;
  } catch (const DomainError& e) {
    std::cerr << "solver error: " << e.what() << '\n';
    return kSolver;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Peer offloading among energy-constrained small-cell base stations"};
  app.require_subcommand(1);

  Overrides run_o, cmp_o, sweep_o;
  auto* run = app.add_subcommand("run", "Run each policy on its replications");
  add_common(run, run_o);
  auto* cmp = app.add_subcommand("compare", "Replay one scenario stream through several policies");
  add_common(cmp, cmp_o);
  auto* swp = app.add_subcommand("sweep", "Repeat the experiment over a parameter grid");
  add_common(swp, sweep_o);
  std::string parameter;
  std::vector<double> values;
  swp->add_option("--parameter", parameter,
                  "control_v, grid_sigma_fraction, rate_max, lan_delay or energy_budget_per_hour");
  swp->add_option("--values", values, "Grid values");
  auto* val = app.add_subcommand("validate", "Check the centralized solver against the oracle");
  std::size_t instances = 200;
  std::uint64_t val_seed = 1;
  val->add_option("--instances", instances, "Random instances with 2 to 4 SBSs");
  val->add_option("--seed", val_seed, "Instance generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  if (*run || *cmp) {
    const auto& o = *run ? run_o : cmp_o;
    return run_guarded([&] {
      const auto c = resolve(o);
      const auto replay = replay_for(c, o);
      const auto* r = replay ? &*replay : nullptr;
      const auto out = *run ? run_experiment(c, r) : compare_policies(c, r);
      print_summaries(out.summaries);
      std::printf("wrote %s\n", c.experiment.output.c_str());
    });
  }
  if (*swp) {
    return run_guarded([&] {
      auto c = resolve(sweep_o);
      if (!parameter.empty()) c.experiment.sweep_parameter = parameter;
      if (!values.empty()) c.experiment.sweep_values = values;
      for (const auto& p : sweep(c)) {
        char prefix[64];
        std::snprintf(prefix, sizeof prefix, "%s=%-8g ", c.experiment.sweep_parameter.c_str(), p.value);
        print_summaries(p.summaries, prefix);
      }
      std::printf("wrote %s/sweep.csv\n", c.experiment.output.c_str());
    });
  }
  return run_guarded([&] {
    const auto r = validate_solvers(instances, val_seed);
    std::printf("instances %zu failures %zu max_rel_gap %.3g max_kkt %.3g\n", r.instances,
                r.failures, r.max_rel_gap, r.max_kkt_violation);
    if (!r.ok()) throw SolverError("validation failed on " + std::to_string(r.failures) + " instances");
  });
}
