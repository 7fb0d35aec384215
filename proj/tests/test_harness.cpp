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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include "peeroff/harness.hpp"

using namespace peeroff;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("peeroff_test_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentConfig small_experiment(const std::string& out) {
  ExperimentConfig c;
  c.experiment.horizon = 40;
  c.experiment.output = out;
  c.experiment.seeds = {23};
  c.scenario.arrivals.rate_max = 1.5;
  return c;
}

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

}  // namespace

TEST(Config, ParsesNestedSections) {
  const auto j = nlohmann::json::parse(R"({
    "scenario": {"area": [50, 80], "density": 0.002, "ue_min": 10, "ue_max": 20,
                 "arrival": {"model": "bursty", "rate_max": 3, "burst_on": 2},
                 "radio": {"sbs_power_dbm": 23}},
    "network": {"cpu_hz": 1.5e9, "control_v": 10, "energy_budget_per_hour": 30},
    "experiment": {"policies": ["open_c", "nop"], "horizon": 7, "replications": 2,
                   "seeds": [3, 9], "workers": 2, "sweep": {"parameter": "rate_max", "values": [1, 2]}}
  })");
  const auto c = parse_config(j);
  EXPECT_EQ(c.scenario.width, 50.0);
  EXPECT_EQ(c.scenario.height, 80.0);
  EXPECT_EQ(c.scenario.arrivals.kind, ArrivalKind::Bursty);
  EXPECT_EQ(c.scenario.arrivals.burst_on, 2);
  EXPECT_EQ(c.scenario.arrivals.burst_off, 12);
  EXPECT_EQ(c.scenario.radio.sbs_power_dbm, 23.0);
  EXPECT_EQ(c.network.service_rate(), 37.5);
  EXPECT_DOUBLE_EQ(c.network.budget_per_slot(), 0.5);
  EXPECT_EQ(c.experiment.policies.size(), 2u);
  EXPECT_EQ(c.replication_seed(1), 9u);
  EXPECT_EQ(c.experiment.sweep_values.size(), 2u);
  // Round trip through the dump.
  const auto again = parse_config(to_json(c));
  EXPECT_EQ(to_json(again).dump(), to_json(c).dump());
}

TEST(Config, DefaultsMatchTheShippedFile) {
  const auto shipped = load_config(PEEROFF_SOURCE_DIR "/configs/default.json");
  EXPECT_EQ(shipped.network.service_rate(), 75.0);
  EXPECT_DOUBLE_EQ(shipped.network.budget_per_slot(), 22.0 * 60.0 / 3600.0);
  EXPECT_EQ(shipped.scenario.density, 1e-3);
  EXPECT_EQ(shipped.scenario.ue_min, 200);
  EXPECT_EQ(shipped.scenario.ue_max, 600);
  ExperimentConfig defaults;
  defaults.experiment.output = shipped.experiment.output;
  EXPECT_EQ(to_json(shipped).dump(), to_json(defaults).dump());
}

TEST(Config, Rejections) {
  auto bad = [](const char* text) {
    try {
      parse_config(nlohmann::json::parse(text));
    } catch (const HarnessError& e) {
      return e.kind() == HarnessError::Kind::Config;
    }
    return false;
  };
  EXPECT_TRUE(bad(R"({"network": {"cpu": 1}})"));
  EXPECT_TRUE(bad(R"({"colour": 1})"));
  EXPECT_TRUE(bad(R"({"experiment": {"policies": ["greedy"]}})"));
  EXPECT_TRUE(bad(R"({"experiment": {"policies": []}})"));
  EXPECT_TRUE(bad(R"({"experiment": {"horizon": 0}})"));
  EXPECT_TRUE(bad(R"({"experiment": {"replications": 3, "seeds": [1, 2]}})"));
  EXPECT_TRUE(bad(R"({"network": {"control_v": 0}})"));
  EXPECT_TRUE(bad(R"({"network": {"energy_cap": 0.1}})"));
  EXPECT_TRUE(bad(R"({"scenario": {"arrival": {"model": "poisson"}}})"));
  EXPECT_TRUE(bad(R"({"scenario": {"area": [1]}})"));
  EXPECT_TRUE(bad(R"({"network": {"lan_delay": "fast"}})"));
  EXPECT_FALSE(bad(R"({})"));
  EXPECT_THROW(load_config("/nonexistent/config.json"), HarnessError);
}

TEST(Replay, RoundTripIsExact) {
  ScenarioConfig sc;
  sc.seed = 11;
  const auto slots = generate_slots(sc, 5);
  const auto dir = scratch("replay");
  fs::create_directories(dir);
  const auto path = (dir / "s.csv").string();
  write_scenario(path, slots);
  const auto back = read_scenario(path);
  ASSERT_EQ(back.size(), slots.size());
  for (std::size_t t = 0; t < slots.size(); ++t) {
    EXPECT_EQ(back[t].arrivals, slots[t].arrivals);
    EXPECT_EQ(back[t].uplink_delay, slots[t].uplink_delay);
    EXPECT_EQ(back[t].tx_energy, slots[t].tx_energy);
  }
}

TEST(Replay, MalformedFiles) {
  const auto dir = scratch("replay_bad");
  fs::create_directories(dir);
  auto write = [&](const std::string& body) {
    const auto p = (dir / "x.csv").string();
    std::ofstream(p) << body;
    return p;
  };
  EXPECT_THROW(read_scenario(write("nope\n")), HarnessError);
  EXPECT_THROW(read_scenario(write("t,sbs,arrivals,uplink_delay,tx_energy\n")), HarnessError);
  EXPECT_THROW(read_scenario(write("t,sbs,arrivals,uplink_delay,tx_energy\n1,0,1,1,1\n")),
               HarnessError);
  EXPECT_THROW(read_scenario(write("t,sbs,arrivals,uplink_delay,tx_energy\n0,0,1,1,1\n0,2,1,1,1\n")),
               HarnessError);
  EXPECT_THROW(read_scenario(write("t,sbs,arrivals,uplink_delay,tx_energy\n0,0,1,1,x\n")),
               HarnessError);
  EXPECT_THROW(read_scenario(
                   write("t,sbs,arrivals,uplink_delay,tx_energy\n0,0,1,1,1\n0,1,1,1,1\n1,0,1,1,1\n")),
               HarnessError);
  EXPECT_THROW(read_scenario((dir / "missing.csv").string()), HarnessError);
}

TEST(Experiment, SingleSlotSingleSbs) {
  auto slot = SlotState::idle(1);
  slot.arrivals = {30.0};
  slot.uplink_delay = {0.01};
  const std::vector<SlotState> replay{slot};
  const auto dir = scratch("t1n1");
  auto c = small_experiment(dir.string());
  c.experiment.horizon = 1;
  const auto out = run_experiment(c, &replay);
  ASSERT_EQ(out.summaries.size(), 1u);
  EXPECT_EQ(out.summaries[0].n_sbs, 1u);
  EXPECT_EQ(out.summaries[0].avg_lan_traffic, 0.0);
  EXPECT_DOUBLE_EQ(out.summaries[0].avg_delay, 30.0 / 45.0 + 0.01);
  const auto text = slurp(dir / "open_c_rep0.csv");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
}

TEST(Experiment, FilesAreByteIdentical) {
  const auto a = scratch("det_a"), b = scratch("det_b");
  auto ca = small_experiment(a.string());
  ca.experiment.policies = {"open_c", "nop", "ssc"};
  ca.experiment.replications = 2;
  auto cb = ca;
  cb.experiment.output = b.string();
  cb.experiment.workers = 2;
  run_experiment(ca);
  run_experiment(cb);
  std::size_t compared = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    const auto name = e.path().filename().string();
    if (name.find("timing") != std::string::npos) continue;
    EXPECT_EQ(slurp(e.path()), slurp(b / name)) << name;
    ++compared;
  }
  EXPECT_EQ(compared, 3u * 2u + 2u + 1u);
}

TEST(Experiment, AggregatesMatchPerSlotSums) {
  const auto dir = scratch("agg");
  auto c = small_experiment(dir.string());
  const auto o = run_replication(c, 0);
  const auto& r = o.runs[0];
  double delay = 0.0, deficit = 0.0, energy = 0.0;
  for (const auto& m : r.slots) {
    delay += m.total_delay;
    deficit += m.total_deficit;
    energy += m.total_energy;
    EXPECT_LT(rel(m.total_delay,
                  m.computation_delay + m.congestion_delay + m.communication_delay),
              1e-9);
    double per_sbs = 0.0;
    for (const auto& s : m.sbs) per_sbs += s.delay.total();
    EXPECT_LT(rel(m.total_delay, per_sbs), 1e-9);
  }
  const double t = static_cast<double>(r.slots.size());
  EXPECT_LT(rel(o.summaries[0].avg_delay, delay / t), 1e-9);
  EXPECT_LT(rel(o.summaries[0].avg_energy, energy / t), 1e-9);
  if (deficit > 0.0) {
    EXPECT_LT(rel(o.summaries[0].avg_deficit, deficit / t), 1e-9);
  }
}

TEST(Compare, EquilibriumNeverBeatsTheOptimumOnItsOwnSlot) {
  auto c = small_experiment(scratch("poa").string());
  c.experiment.horizon = 30;
  c.experiment.policies = {"open_c", "open_a"};
  c.experiment.measure_poa = true;
  const auto o = run_replication(c, 0);
  for (const auto& m : o.runs[1].slots) {
    ASSERT_FALSE(std::isnan(m.reference_objective));
    EXPECT_GE(m.objective, m.reference_objective - 1e-9 * std::abs(m.reference_objective));
    EXPECT_GE(m.poa, 1.0 - 1e-9);
    EXPECT_FALSE(m.solver_error) << m.error;
  }
  EXPECT_GE(o.summaries[1].poa_mean, 1.0 - 1e-9);
}

TEST(Compare, DelayOptimalAndNoPBracketOpenC) {
  auto c = small_experiment(scratch("order").string());
  c.experiment.horizon = 60;
  c.experiment.policies = {"open_c", "d_optimal", "nop"};
  c.scenario.arrivals.kind = ArrivalKind::Grid;
  c.scenario.arrivals.grid_sigma_fraction = 0.6;
  const auto out = compare_policies(c);
  const auto& s = out.summaries;
  EXPECT_LE(s[1].avg_delay, s[0].avg_delay * (1.0 + 1e-9));
  EXPECT_GT(s[2].avg_delay, s[0].avg_delay);
  EXPECT_TRUE(fs::exists(fs::path(c.experiment.output) / "compare_rep0.csv"));
}

TEST(Compare, NeedsTwoPolicies) {
  auto c = small_experiment(scratch("one").string());
  EXPECT_THROW(compare_policies(c), HarnessError);
}

TEST(Sweep, WritesOneRowPerPointAndPolicy) {
  const auto dir = scratch("sweep");
  auto c = small_experiment(dir.string());
  c.experiment.horizon = 10;
  c.experiment.policies = {"open_c", "nop"};
  c.experiment.sweep_parameter = "control_v";
  c.experiment.sweep_values = {1.0, 100.0};
  const auto pts = sweep(c);
  ASSERT_EQ(pts.size(), 2u);
  const auto text = slurp(dir / "sweep.csv");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
  EXPECT_EQ(text.rfind("parameter,value,policy,", 0), 0u);
  c.experiment.sweep_parameter = "colour";
  EXPECT_THROW(sweep(c), HarnessError);
}

TEST(Experiment, UnwritableOutputIsAnIoError) {
  const auto dir = scratch("io");
  fs::create_directories(dir);
  std::ofstream(dir / "file") << "x";
  auto c = small_experiment((dir / "file" / "sub").string());
  try {
    run_experiment(c);
    FAIL() << "expected an IO error";
  } catch (const HarnessError& e) {
    EXPECT_EQ(e.kind(), HarnessError::Kind::Io);
  }
}

TEST(Validate, SolverMatchesOracle) {
  const auto r = validate_solvers(40, 5);
  EXPECT_EQ(r.instances, 40u);
  EXPECT_TRUE(r.ok());
  EXPECT_LT(r.max_rel_gap, 1e-6);
  EXPECT_LT(r.max_kkt_violation, 1e-6);
}

TEST(Csv, HeaderMatchesRowWidth) {
  auto c = small_experiment(scratch("csv").string());
  c.experiment.horizon = 2;
  const auto o = run_replication(c, 0);
  const auto header = metrics_header(o.runs[0].final_deficits.size());
  const auto row = metrics_row(o.runs[0].slots[0]);
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), std::count(row.begin(), row.end(), ','));
  const std::string sh = summary_header();
  const auto sr = summary_row(o.summaries[0]);
  EXPECT_EQ(std::count(sh.begin(), sh.end(), ','), std::count(sr.begin(), sr.end(), ','));
}
