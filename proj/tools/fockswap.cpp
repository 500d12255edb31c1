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

// Command-line front end. Exit codes: 0 ok, 1 validation failure, 2 input
// error, 3 solver failure.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "fockswap/runner.hpp"

#ifndef FOCKSWAP_VERSION
#define FOCKSWAP_VERSION "dev"
#endif

namespace {

using namespace fockswap;

constexpr int kOk = 0, kValidation = 1, kInput = 2, kSolver = 3;

double frequency_arg(const std::string& v, const char* name) {
  return detail::quantity(nlohmann::ordered_json(v), detail::Quantity::frequency, name);
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ParseError(path, "cannot open for writing");
  f << content;
  if (!f) throw ParseError(path, "write failed");
}

int simulate(const std::string& which, int truncation, const std::string& output, const std::string& plot,
             bool reference) {
  Scenario s = load_scenario(which);
  if (truncation > 0) s = with_truncation(s, truncation);
  if (!output.empty()) s.output = output;
  if (!plot.empty()) s.plot = plot;
  const auto t0 = std::chrono::steady_clock::now();
  const RunOutput r = run(s, reference && !s.plot.empty());
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto& d = r.result.trajectory.diagnostics;
  std::printf("scenario        %s\n", s.name.c_str());
  std::printf("dimension       %d (n = %d, coupler levels %zu)\n", r.result.dims.dimension(), r.result.dims.n_a,
              r.result.dims.coupler_levels.size());
  std::printf("method          %s, %ld steps, dt = %.4g s\n", std::string(name(d.method)).c_str(), d.steps, d.dt);
  std::printf("t_swap          %.6g us\n", r.result.t_swap * 1e6);
  std::printf("F(t_swap)       %.6f\n", r.result.fidelity_at_swap);
  if (r.reference) std::printf("F_closed        %.6f\n", r.reference->fidelity_at_swap);
  std::printf("max |tr - 1|    %.3g\n", d.max_trace_error);
  if (!r.result.pure) {
    std::printf("max |rho - rho+| %.3g\n", d.max_hermiticity_error);
    std::printf("min eigenvalue  %.3g (%d checkpoints)\n", d.min_eigenvalue, d.positivity_checked);
  }
  std::printf("wall time       %.1f s\n", secs);
  if (!s.output.empty()) write_file(s.output, r.csv);
  else std::fputs(r.csv.c_str(), stdout);
  if (!s.plot.empty()) write_file(s.plot, r.svg);
  return kOk;
}

int params_solve(const std::string& ga, const std::string& da, const std::string& d, const std::string& delta,
                 int k) {
  const double MHz = kTwoPi * 1e6;
  const auto s = solve_params(frequency_arg(ga, "--ga"), frequency_arg(da, "--da"), frequency_arg(d, "--d"),
                              frequency_arg(delta, "--delta"), k);
  const auto& p = s.physical;
  std::printf("quantity            value\n");
  std::printf("g_a/2pi             %.6f MHz\n", p.g_a / MHz);
  std::printf("g_b/2pi             %.6f MHz\n", p.g_b / MHz);
  std::printf("Omega/2pi           %.6f MHz\n", p.Omega / MHz);
  std::printf("Delta_a/2pi         %.6f MHz\n", p.Delta_a / MHz);
  std::printf("Delta/2pi           %.6f MHz\n", p.Delta / MHz);
  std::printf("delta/2pi           %.6f MHz\n", p.delta_b / MHz);
  std::printf("g~_a/2pi            %.6f MHz\n", p.g_tilde_a() / MHz);
  std::printf("lambda/2pi          %.6f MHz\n", s.ideal.lambda / MHz);
  std::printf("omega/2pi           %.6f MHz\n", s.ideal.omega / MHz);
  std::printf("t_swap              %.6f us\n", s.t_swap * 1e6);
  std::printf("k                   %d\n", p.k);
  std::printf("matching residual   %.3g\n", s.matching_residual);
  std::printf("\ncondition                                                 ratio\n");
  for (const auto& c : check_detuning_conditions(p).conditions) std::printf("%-56s %8.3g\n", c.name.c_str(), c.ratio);
  return kOk;
}

int protocol_run(const std::string& which, int truncation) {
  Scenario s = load_scenario(which);
  if (truncation > 0) s = with_truncation(s, truncation);
  const Ket phi = prepare(s.phi, s.tail_tol), phib = prepare(s.phi_bar, s.tail_tol);
  const int n = static_cast<int>(std::max(phi.dimension(), phib.dimension()));
  const SystemDims dims{n, n, 0, {Level::g, Level::gp}};
  const auto ideal = effective_ideal(resolve_params(s));
  const auto r = run_protocol(phi, phib, s.alpha, s.beta, ideal, dims);
  std::printf("scenario   %s (n = %d)\n", s.name.c_str(), n);
  std::printf("t_swap     %.6g us\n", ideal.t_swap() * 1e6);
  for (Level l : {Level::g, Level::gp}) {
    const auto& b = r.branch(l);
    const Sign sg = l == Level::g ? Sign::positive : Sign::negative;
    const Ket want = entangled_target(phi, phib, s.alpha, s.beta, sg);
    const double f = want.norm() > 0.0 ? std::abs(inner(want.normalized(), b.state)) : 0.0;
    // Born weight of a branch: half the squared norm of the unnormalized target
    const double expect = 0.5 * want.amplitudes().squaredNorm();
    std::printf("outcome %-3s p = %.10f (analytic %.10f)  |<target|state>| = %.12f\n",
                std::string(name(l)).c_str(), b.probability, expect, f);
  }
  return kOk;
}

int swap_check(const std::string& code, int truncation, double amplitude) {
  const IdealParams p{-kTwoPi * 2.5e6, kTwoPi * 0.5e6};
  int n = truncation;
  Ket x, y;
  if (code == "fock") {
    if (n <= 0) n = 2;
    x = fock(0, n);
    y = fock(1, n);
  } else if (code == "coherent") {
    if (n <= 0) n = 15;
    x = coherent(amplitude, n);
    y = coherent(-amplitude, n);
  } else if (code == "cat") {
    if (n <= 0) n = 15;
    x = cat(amplitude, Parity::even, n);
    y = cat(amplitude, Parity::odd, n);
  } else if (code == "squeezed") {
    if (n <= 0) n = 45;
    x = squeezed_vacuum(amplitude, n);
    y = squeezed_vacuum(-amplitude, n);
  } else {
    throw ParameterError("unknown code '" + code + "' (fock, coherent, cat, squeezed)");
  }
  const SystemDims dims{n, n, 0, {Level::g, Level::gp}};
  const auto r = swap_gate_check(x, y, p, dims);
  const char* labels[] = {"|x x>  -> |x x>", "|x y>  -> |y x>", "|y x>  -> |x y>", "|y y>  -> |y y>"};
  std::printf("code %s, n = %d\n", code.c_str(), n);
  for (int i = 0; i < 4; ++i) std::printf("%s  infidelity %.3e\n", labels[i], r.infidelity[i]);
  std::printf("worst %.3e\n", r.worst);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional two-oscillator swap via a four-level coupler: simulations and checks"};
  app.set_version_flag("--version", std::string("fockswap ") + FOCKSWAP_VERSION + " (C++" +
                                        std::to_string(__cplusplus / 100 % 100) + ", Eigen " +
                                        std::to_string(EIGEN_WORLD_VERSION) + "." +
                                        std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                        std::to_string(EIGEN_MINOR_VERSION) + ", built " + __DATE__ + ")");
  app.require_subcommand(1);

  std::string scenario, output, plot;
  int truncation = 0;
  bool no_reference = false;
  auto* sim = app.add_subcommand("simulate", "run a scenario (preset name or JSON file)");
  sim->add_option("--scenario", scenario, "preset (fig2a..fig2d, fig2a-ideal..) or path")->required();
  sim->add_option("--truncation", truncation, "override both oscillator truncations");
  sim->add_option("--output", output, "CSV file (default: stdout)");
  sim->add_option("--plot", plot, "SVG file");
  sim->add_flag("--no-reference", no_reference, "skip the closed companion run in the plot");

  std::string ga, da, d, delta;
  int k = 1;
  auto* params = app.add_subcommand("params", "parameter tools");
  params->require_subcommand(1);
  auto* solve = params->add_subcommand("solve", "solve the matching relations for g_b and Omega");
  solve->add_option("--ga", ga, "g_a with unit, e.g. \"60 MHz\"")->required();
  solve->add_option("--da", da, "Delta_a with unit")->required();
  solve->add_option("--d", d, "Delta with unit")->required();
  solve->add_option("--delta", delta, "delta with unit")->required();
  solve->add_option("--k", k, "branch index k >= 1");

  std::string code = "cat";
  double amplitude = 1.0;
  auto* proto = app.add_subcommand("protocol", "ideal-protocol tools");
  proto->require_subcommand(1);
  auto* prun = proto->add_subcommand("run", "ideal protocol with branch probabilities");
  prun->add_option("--scenario", scenario, "preset or path")->required();
  prun->add_option("--truncation", truncation, "override both oscillator truncations");
  auto* pswap = proto->add_subcommand("swap-check", "four-input swap-gate check");
  pswap->add_option("--code", code, "fock, coherent, cat or squeezed");
  pswap->add_option("--truncation", truncation, "oscillator truncation");
  pswap->add_option("--amplitude", amplitude, "alpha or xi of the code");

  std::string suite = "all";
  auto* val = app.add_subcommand("validate", "run a validation suite");
  val->add_option("--suite", suite, "algebra, params, swap, lindblad or all");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInput;
  }

  try {
    if (*sim) return simulate(scenario, truncation, output, plot, !no_reference);
    if (*solve) return params_solve(ga, da, d, delta, k);
    if (*prun) return protocol_run(scenario, truncation);
    if (*pswap) return swap_check(code, truncation, amplitude);
    if (*val) return validate_suite(suite, std::cout) ? kOk : kValidation;
  } catch (const SolverError& e) {
    std::fprintf(stderr, "solver error: %s\n", e.what());
    return kSolver;
  } catch (const fockswap::Error& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kInput;
  }
  return kOk;
}
