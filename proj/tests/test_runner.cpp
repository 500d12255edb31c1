// Copyright 2026 The fockswap Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "fockswap/runner.hpp"

namespace fockswap {
namespace {

constexpr double MHz = kTwoPi * 1e6;

std::string scenario_dir() {
  const char* d = std::getenv("FOCKSWAP_SCENARIO_DIR");
  return d ? d : "scenarios";
}

/// Minimal valid scenario with one key replaced or added.
std::string minimal(const std::string& extra = "") {
  return R"({"name": "t", "phi": {"kind": "fock", "n": 0, "truncation": 2},
             "phi_bar": {"kind": "fock", "n": 1, "truncation": 2},
             "params": {"solve": {"g_a": "60 MHz", "Delta_a": "1.5 GHz", "Delta": "1.25 GHz", "delta": "0.25 GHz"}})" +
         extra + "}";
}

void expect_parse_error(const std::string& text, const std::string& location, const std::string& fragment) {
  try {
    parse_scenario(text);
    FAIL() << "expected a parse error at " << location;
  } catch (const ParseError& e) {
    EXPECT_EQ(e.location(), location);
    EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
  }
}

TEST(Units, FrequenciesCarryTwoPi) {
  using detail::Quantity;
  auto q = [](const char* s, Quantity k) { return detail::quantity(nlohmann::ordered_json(s), k, "x"); };
  EXPECT_EQ(q("60 MHz", Quantity::frequency), 60e6 * kTwoPi);
  EXPECT_EQ(q("1.5GHz", Quantity::frequency), 1.5e9 * kTwoPi);
  EXPECT_EQ(q("2 kHz", Quantity::frequency), 2e3 * kTwoPi);
  EXPECT_EQ(q("3e8 rad/s", Quantity::frequency), 3e8);
  EXPECT_DOUBLE_EQ(q("0.6 us", Quantity::time), q("600 ns", Quantity::time));
  EXPECT_DOUBLE_EQ(q("0.6 μs", Quantity::time), 0.6e-6);
  EXPECT_DOUBLE_EQ(q("20 us", Quantity::rate), 5e4);
  EXPECT_EQ(q("5e4 /s", Quantity::rate), 5e4);
  EXPECT_EQ(q("5e4 1/s", Quantity::rate), 5e4);
  EXPECT_EQ(q("off", Quantity::rate), 0.0);
  EXPECT_THROW(q("60 furlongs", Quantity::frequency), ParseError);
  EXPECT_THROW(q("0 us", Quantity::rate), ParseError);
}

TEST(Load, MissingUnitNamesTheKey) {
  expect_parse_error(minimal(R"(, "horizon": 0.6)"), "horizon", "missing unit");
  expect_parse_error(R"({"name": "t", "phi": {"kind": "fock", "n": 0, "truncation": 2},
                         "phi_bar": {"kind": "fock", "n": 1, "truncation": 2},
                         "params": {"solve": {"g_a": "60", "Delta_a": "1.5 GHz", "Delta": "1.25 GHz",
                                              "delta": "0.25 GHz"}}})",
                     "params.solve.g_a", "missing unit");
}

TEST(Load, UnknownKeysAreRejectedWithLocation) {
  expect_parse_error(minimal(R"(, "horizn": "0.6 us")"), "horizn", "unknown key");
  expect_parse_error(minimal(R"(, "rates": {"kappa_c": "20 us"})"), "rates.kappa_c", "unknown key");
  expect_parse_error(minimal(R"(, "solver": {"method": "rk4", "stepz": 3})"), "solver.stepz", "unknown key");
  expect_parse_error(R"({"name": "t", "phi": {"kind": "fock", "n": 0, "truncation": 2, "alpha": 1},
                         "phi_bar": {"kind": "fock", "n": 1, "truncation": 2}, "params": {}})",
                     "phi.alpha", "unknown key");
}

TEST(Load, EmptyAndMalformedFiles) {
  EXPECT_THROW(parse_scenario(""), ParseError);
  EXPECT_THROW(parse_scenario(" \n\t "), ParseError);
  EXPECT_THROW(parse_scenario("{\"name\": "), ParseError);
  EXPECT_THROW(parse_scenario("[1, 2]"), ParseError);
}

TEST(Load, InconsistentParametersAreParseErrors) {
  // delta must equal Delta_a - Delta
  expect_parse_error(R"({"name": "t", "phi": {"kind": "fock", "n": 0, "truncation": 2},
                         "phi_bar": {"kind": "fock", "n": 1, "truncation": 2},
                         "params": {"solve": {"g_a": "60 MHz", "Delta_a": "1.5 GHz", "Delta": "1.25 GHz",
                                              "delta": "0.3 GHz"}}})",
                     "params.solve", "inconsistent");
  expect_parse_error(R"({"name": "t", "phi": {"kind": "fock", "n": 0, "truncation": 2},
                         "phi_bar": {"kind": "fock", "n": 1, "truncation": 2},
                         "params": {"physical": {"g_a": "60 MHz", "g_b": "25 MHz", "Omega": "114 MHz",
                                                 "Delta_a": "1.5 GHz", "Delta": "1.2 GHz", "delta_b": "0.25 GHz"}}})",
                     "params.physical", "inconsistent");
  expect_parse_error(minimal(R"(, "alpha": 0.9, "beta": 0.9)"), "alpha", "must be 1");
  expect_parse_error(minimal(R"(, "crosstalk": {"enabled": true})"), "crosstalk", "distinct");
}

TEST(Presets, Fig2aMatchesTheSupplementSetup) {
  const Scenario s = preset("fig2a");
  EXPECT_EQ(s.phi.kind, OscKind(CoherentSpec{1.0}));
  EXPECT_EQ(s.phi_bar.kind, OscKind(CoherentSpec{-1.0}));
  EXPECT_EQ(s.rates, DecoherenceRates::supplement());
  EXPECT_TRUE(s.crosstalk.enabled);
  EXPECT_EQ(s.hamiltonian, HamiltonianChoice::effective);
  EXPECT_DOUBLE_EQ(s.horizon, 0.6e-6);
  EXPECT_NEAR(std::abs(s.alpha - 1 / std::sqrt(2.0)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(s.beta - 1 / std::sqrt(2.0)), 0.0, 1e-15);
  const PhysicalParams p = resolve_params(s);
  EXPECT_NEAR(p.g_b / MHz, 25.0, 1e-9);
  EXPECT_NEAR(p.g_ab / MHz, 6.0, 1e-9);
  EXPECT_NEAR(p.Delta_ab() / MHz, 3000.0, 1e-6);
}

TEST(Presets, IdealVariantsDropRatesAndCrosstalk) {
  for (std::string_view base : {"fig2a", "fig2b", "fig2c", "fig2d"}) {
    const Scenario open = preset(base), ideal = preset(std::string(base) + "-ideal");
    EXPECT_TRUE(ideal.rates.all_zero());
    EXPECT_FALSE(ideal.crosstalk.enabled);
    EXPECT_EQ(ideal.phi, open.phi);
    EXPECT_EQ(ideal.phi_bar, open.phi_bar);
    EXPECT_EQ(ideal.params, open.params);
  }
}

TEST(Presets, StatePairs) {
  EXPECT_EQ(preset("fig2b").phi.kind, OscKind(SqueezedSpec{1.0}));
  EXPECT_EQ(preset("fig2b").phi_bar.kind, OscKind(SqueezedSpec{-1.0}));
  EXPECT_EQ(preset("fig2c").phi.kind, OscKind(CoherentSpec{1.0}));
  EXPECT_EQ(preset("fig2c").phi_bar.kind, OscKind(SqueezedSpec{1.0}));
  EXPECT_EQ(preset("fig2d").phi.kind, OscKind(CatSpec{1.0, Parity::even}));
  EXPECT_EQ(preset("fig2d").phi_bar.kind, OscKind(CatSpec{1.0, Parity::odd}));
  EXPECT_THROW(preset("fig3"), ParseError);
  EXPECT_THROW(load_scenario("no-such-scenario"), ParseError);
}

TEST(RoundTrip, SerializeThenLoadIsIdentity) {
  std::vector<Scenario> all;
  for (const auto& n : preset_names()) all.push_back(preset(n));
  all.push_back(load_scenario(scenario_dir() + "/fock-bell-physical.json"));
  Scenario odd = preset("fig2d");
  odd.crosstalk.g_ab = 2.0 * MHz;
  odd.solver.method = Method::dopri5;
  odd.solver.rtol = 1e-7;
  odd.solver.sample_interval = 1.0 / 3.0 * 1e-7;
  odd.phi = {CustomSpec{{cplx(0.1, 0.3), 0.7, cplx(0.0, -0.2)}}, 4};
  all.push_back(odd);
  for (const auto& s : all) {
    const Scenario back = parse_scenario(serialize(s));
    EXPECT_TRUE(back == s) << s.name;
    EXPECT_EQ(serialize(back), serialize(s)) << s.name;
  }
}

TEST(RoundTrip, ScenarioFilesEqualPresets) {
  for (const auto& n : preset_names()) EXPECT_TRUE(load_scenario(scenario_dir() + "/" + n + ".json") == preset(n)) << n;
}

TEST(Truncation, OverrideSetsBothModes) {
  const Scenario s = with_truncation(preset("fig2b"), 12);
  EXPECT_EQ(s.phi.truncation, 12);
  EXPECT_EQ(s.phi_bar.truncation, 12);
  EXPECT_THROW(with_truncation(s, 1), ParameterError);
}

TEST(Run, IdealPresetPeaksAtTheSwapTime) {
  const RunOutput r = run(preset("fig2a-ideal"));
  EXPECT_FALSE(r.reference.has_value());
  EXPECT_GE(r.result.fidelity_at_swap, 0.999);
  EXPECT_NEAR(r.result.t_swap, 0.5e-6, 1e-15);
}

TEST(Run, CsvIsBitIdenticalAcrossRuns) {
  Scenario s = with_truncation(preset("fig2a"), 8);
  s.tail_tol = 1e-4;
  s.solver.positivity_checks = 2;
  const RunOutput a = run(s), b = run(s);
  EXPECT_EQ(a.csv, b.csv);
  EXPECT_EQ(a.svg, b.svg);
  EXPECT_EQ(a.csv.rfind("time_us,fidelity,trace,purity,pop_e,pop_f,pop_gprime\n", 0), 0u);
  // open run plus its closed companion
  ASSERT_TRUE(a.reference.has_value());
  EXPECT_EQ(std::count(a.svg.begin(), a.svg.end(), '\n') > 10, true);
  std::size_t lines = 0, pos = 0;
  while ((pos = a.svg.find("<polyline", pos)) != std::string::npos) ++lines, ++pos;
  EXPECT_EQ(lines, 2u);
  EXPECT_LT(a.result.fidelity_at_swap, a.reference->fidelity_at_swap);
}

TEST(Run, StaticBranchOnlyDecoheres) {
  // beta = 0 leaves the coupler in g', where no conditional dynamics act
  Scenario s = with_truncation(preset("fig2a"), 8);
  s.tail_tol = 1e-4;
  s.alpha = 1.0;
  s.beta = 0.0;
  s.crosstalk.enabled = false;
  s.solver.positivity_checks = 0;
  const auto k1 = run(s, false);
  auto& solve = std::get<SolveInputs>(s.params);
  solve.k = 2;
  s.horizon = k1.result.trajectory.times.back();
  s.solver.dt = k1.result.trajectory.diagnostics.dt;
  const auto k2 = run(s, false);
  // the swap-time marks differ between k = 1 and k = 2, so compare on shared grid points
  const auto& t1 = k1.result.trajectory.times;
  const auto& t2 = k2.result.trajectory.times;
  int shared = 0;
  for (std::size_t i = 0, j = 0; i < t1.size() && j < t2.size();) {
    if (std::abs(t1[i] - t2[j]) <= 1e-12 * t1.back()) {
      EXPECT_NEAR(k1.result.trajectory.samples[i].fidelity, k2.result.trajectory.samples[j].fidelity, 1e-12);
      ++shared, ++i, ++j;
    } else if (t1[i] < t2[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  EXPECT_GT(shared, 200);
  EXPECT_LT(k1.result.trajectory.samples.back().fidelity, 1.0);
}

TEST(Run, SolverErrorsNameTheScenario) {
  Scenario s = with_truncation(preset("fig2a"), 8);
  s.tail_tol = 1e-4;
  s.solver.trace_tolerance = 1e-18;
  s.solver.method = Method::dopri5;
  s.solver.rtol = 1e-3;
  s.solver.atol = 1e-3;
  try {
    run(s, false);
    FAIL() << "expected a solver error";
  } catch (const SolverError& e) {
    EXPECT_NE(std::string(e.what()).find("scenario 'fig2a'"), std::string::npos) << e.what();
  }
}

TEST(Validate, SuitesReportAndRejectUnknownNames) {
  std::ostringstream out;
  EXPECT_TRUE(validate_suite("params", out));
  EXPECT_NE(out.str().find("PASS g_b/2pi = 25 +- 1 MHz"), std::string::npos);
  EXPECT_EQ(out.str().find("FAIL"), std::string::npos);
  std::ostringstream alg;
  EXPECT_TRUE(validate_suite("algebra", alg));
  EXPECT_THROW(validate_suite("everything", alg), ParameterError);
}

}  // namespace
}  // namespace fockswap
