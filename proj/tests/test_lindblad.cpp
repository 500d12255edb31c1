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

#include <sstream>

#include <gtest/gtest.h>

#include "fockswap/lindblad.hpp"
#include "oracles.hpp"

namespace fockswap {
namespace {

constexpr double MHz = kTwoPi * 1e6;
constexpr double GHz = kTwoPi * 1e9;

const SystemDims kQubitPair{2, 2, 0, {Level::g, Level::gp}};

SolvedParams paper() { return solve_params(60 * MHz, 1.5 * GHz, 1.25 * GHz, 0.25 * GHz, 1); }

Hamiltonian zero_h(const SystemDims& d) { return Hamiltonian(OperatorMatrix::zero(d.shape())); }

TEST(Channels, SupplementGivesElevenChannels) {
  auto r = DecoherenceRates::supplement();
  EXPECT_NEAR(1 / r.kappa_a, 20e-6, 1e-18);
  EXPECT_NEAR(1 / r.kappa_b, 20e-6, 1e-18);
  EXPECT_NEAR(1 / r.gamma_gpg, 60e-6, 1e-18);
  EXPECT_NEAR(1 / r.gamma_egp, 40e-6, 1e-18);
  EXPECT_NEAR(1 / r.gamma_fe, 30e-6, 1e-18);
  for (double g : {r.gamma_eg, r.gamma_fgp, r.gamma_fg}) EXPECT_NEAR(1 / g, 100e-6, 1e-18);
  for (double g : {r.gamma_phi_gp, r.gamma_phi_e, r.gamma_phi_f}) EXPECT_NEAR(1 / g, 15e-6, 1e-18);
  auto ch = build_channels(r, SystemDims{3, 3});
  ASSERT_EQ(ch.size(), 11u);
  EXPECT_EQ(ch.front().label, "kappa_a");
  EXPECT_EQ(ch.back().label, "gamma_phi_f");
}

TEST(Channels, ZeroRatesGiveNone) { EXPECT_TRUE(build_channels(DecoherenceRates::none(), SystemDims{3, 3}).empty()); }

TEST(Channels, RestrictedCouplerDropsAbsentPaths) {
  auto ch = build_channels(DecoherenceRates::supplement(), SystemDims{3, 3, 0, {Level::g, Level::gp}});
  std::vector<std::string> labels;
  for (const auto& c : ch) labels.push_back(c.label);
  EXPECT_EQ(labels, (std::vector<std::string>{"kappa_a", "kappa_b", "gamma_gpg", "gamma_phi_gp"}));
}

TEST(Channels, RelaxationOperatorMatrixElement) {
  DecoherenceRates r;
  r.gamma_fe = 1.0;
  SystemDims dims{2, 2};
  auto ch = build_channels(r, dims);
  ASSERT_EQ(ch.size(), 1u);
  const int from[] = {1, 0, 3}, to[] = {1, 0, 2};
  DenseMat l = ch[0].op.dense();
  EXPECT_EQ(l(flat_index(dims.shape(), to), flat_index(dims.shape(), from)), cplx(1.0));
  EXPECT_EQ(ch[0].op.nnz(), 4);
}

TEST(Channels, NegativeRateIsAnError) {
  DecoherenceRates r;
  r.gamma_eg = -1.0;
  EXPECT_THROW(build_channels(r, SystemDims{2, 2}), ParameterError);
  r.gamma_eg = std::nan("");
  EXPECT_THROW(r.validate(), ParameterError);
}

TEST(Integrate, AmplitudeDecayIsExponential) {
  const double kappa = 1.0 / 20e-6;
  DecoherenceRates r;
  r.kappa_a = kappa;
  const int one[] = {1, 0, 0};
  auto rho0 = DensityMatrix::from_ket(Ket::basis(kQubitPair.shape(), one));
  for (Method m : {Method::rk4, Method::dopri5}) {
    SolverConfig cfg;
    cfg.method = m;
    cfg.dt = 1e-3 / kappa;
    cfg.sample_every = 100000;
    cfg.marks = {0.5 / kappa, 1.0 / kappa, 2.0 / kappa};
    auto tr = integrate(rho0, zero_h(kQubitPair), build_channels(r, kQubitPair), cfg, 2.0 / kappa);
    for (double kt : {0.5, 1.0, 2.0}) {
      const auto& s = tr.at(kt / kappa);
      EXPECT_NEAR(s.time * kappa, kt, 1e-9) << name(m);
      EXPECT_NEAR(s.edge[0], std::exp(-kt), 1e-6) << name(m) << " kt=" << kt;
    }
    EXPECT_LE(tr.diagnostics.max_trace_error, 1e-12);
  }
}

TEST(Integrate, ClosedStaticMatchesExpm) {
  SystemDims dims{3, 3, 0, {Level::g, Level::gp}};
  auto h = oracle::random_hermitian(dims.shape(), 3, 1.0 * MHz);
  auto psi = oracle::random_ket(dims.shape(), 4);
  const double horizon = 1e-6;
  SolverConfig cfg;
  cfg.method = Method::rk4;
  cfg.keep_snapshots = true;
  cfg.sample_every = 1000000;
  auto tr = integrate(DensityMatrix::from_ket(psi), Hamiltonian(h), {}, cfg, horizon);
  const auto want = DensityMatrix::from_ket(expm_apply(h, psi, tr.times.back()));
  EXPECT_LE((tr.snapshots.back().matrix() - want.matrix()).cwiseAbs().maxCoeff(), 1e-8);
  cfg.method = Method::dopri5;
  cfg.sample_interval = horizon;
  auto ad = integrate(DensityMatrix::from_ket(psi), Hamiltonian(h), {}, cfg, horizon);
  const auto want2 = DensityMatrix::from_ket(expm_apply(h, psi, ad.times.back()));
  EXPECT_LE((ad.snapshots.back().matrix() - want2.matrix()).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Integrate, ProjectorDephasingHalvesTheRate) {
  const double gamma = 1.0 / 15e-6;
  DecoherenceRates r;
  r.gamma_phi_gp = gamma;
  const double s = 1.0 / std::sqrt(2.0);
  auto psi = product_state(fock(0, 2), fock(0, 2), std::nullopt, CouplerState::superposition(s, s),
                           kQubitPair.coupler_levels);
  SolverConfig cfg;
  cfg.method = Method::rk4;
  cfg.dt = 1e-3 / gamma;
  cfg.keep_snapshots = true;
  cfg.sample_every = 500;
  auto tr = integrate(DensityMatrix::from_ket(psi), zero_h(kQubitPair), build_channels(r, kQubitPair), cfg,
                      2.0 / gamma);
  for (std::size_t i = 0; i < tr.times.size(); ++i) {
    const double coh = std::abs(tr.snapshots[i].matrix()(0, 1));
    EXPECT_NEAR(coh, 0.5 * std::exp(-gamma * tr.times[i] / 2), 1e-9);
    EXPECT_NEAR(tr.samples[i].populations[1], 0.5, 1e-12);
  }
}

TEST(Integrate, TimeDependentFullHamiltonianAgainstDenseReference) {
  // short window of the full circuit Hamiltonian, closed system
  auto p = paper().physical;
  SystemDims dims{2, 2};
  const double s = 1.0 / std::sqrt(2.0);
  auto psi = product_state(fock(1, 2), fock(0, 2), std::nullopt, CouplerState::superposition(s, s));
  auto h = full_hamiltonian(p, dims);
  const double horizon = 2e-9;
  SolverConfig cfg;
  cfg.method = Method::dopri5;
  cfg.keep_snapshots = true;
  cfg.sample_interval = horizon;
  auto tr = integrate(DensityMatrix::from_ket(psi), h, {}, cfg, horizon);
  // dense classical RK4 with a tiny step on the ket
  Vec y = psi.amplitudes();
  const long n = 20000;
  const double dt = horizon / n;
  auto f = [&](double t, const Vec& v) -> Vec { return -kI * (h.at(t).dense() * v); };
  for (long i = 0; i < n; ++i) {
    const double t = i * dt;
    Vec k1 = f(t, y), k2 = f(t + dt / 2, y + dt / 2 * k1), k3 = f(t + dt / 2, y + dt / 2 * k2),
        k4 = f(t + dt, y + dt * k3);
    y += dt / 6 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  DenseMat want = y * y.adjoint();
  EXPECT_LE((tr.snapshots.back().matrix() - want).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(Integrate, SplitStepMatchesAdaptiveOnCrosstalk) {
  auto p = paper().physical;
  p.g_ab = 0.1 * std::max(p.g_a, p.g_b);
  p.omega_a = 7.5 * GHz;
  p.omega_b = 4.5 * GHz;
  SystemDims dims{3, 3, 0, {Level::g, Level::gp}};
  auto h = Hamiltonian(build_effective(p, dims)) + crosstalk_hamiltonian(p, dims);
  auto psi = product_state(coherent(0.6, 3, 1e-2), fock(0, 3), std::nullopt, CouplerState::superposition(0.6, 0.8),
                           dims.coupler_levels);
  const double horizon = 20e-9;
  SolverConfig cfg;
  cfg.keep_snapshots = true;
  cfg.dt = 0.5e-9;
  cfg.sample_every = 1000000;
  auto split = integrate(DensityMatrix::from_ket(psi), h, {}, cfg, horizon);
  EXPECT_EQ(split.diagnostics.method, Method::split);
  EXPECT_LE(split.diagnostics.unitarity_error, 1e-10);
  cfg.method = Method::dopri5;
  cfg.rtol = 1e-10;
  cfg.atol = 1e-12;
  cfg.sample_interval = horizon;
  auto ref = integrate(DensityMatrix::from_ket(psi), h, {}, cfg, horizon);
  EXPECT_LE((split.snapshots.back().matrix() - ref.snapshots.back().matrix()).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(Integrate, KetAndDensityPathsAgree) {
  auto sp = paper();
  SystemDims dims{8, 8, 0, {Level::g, Level::gp}};
  const double s = 1.0 / std::sqrt(2.0);
  auto phi = coherent(1.0, 8, 1e-4), phib = coherent(-1.0, 8, 1e-4);
  auto psi = product_state(phi, phib, std::nullopt, CouplerState::superposition(s, s), dims.coupler_levels);
  auto ideal = ideal_pre_pulse_state(phi, phib, s, s, dims);
  Hamiltonian h(build_effective(sp.physical, dims));
  SolverConfig cfg;
  cfg.method = Method::rk4;
  cfg.dt = sp.t_swap / 786;
  cfg.sample_every = 131;
  auto ket = integrate(psi, h, cfg, sp.t_swap, &ideal);
  auto rho = integrate(DensityMatrix::from_ket(psi), h, {}, cfg, sp.t_swap, &ideal);
  ASSERT_EQ(ket.samples.size(), rho.samples.size());
  for (std::size_t i = 0; i < ket.samples.size(); ++i)
    EXPECT_NEAR(ket.samples[i].fidelity, rho.samples[i].fidelity, 1e-6);
  EXPECT_GE(rho.diagnostics.min_eigenvalue, -1e-7);
  EXPECT_LE(rho.diagnostics.max_hermiticity_error, 1e-9);
}

TEST(Integrate, TraceDriftIsReported) {
  // RK4 on a ket with a time-dependent term does not conserve the norm
  auto p = paper().physical;
  SystemDims dims{2, 2};
  auto psi = product_state(fock(1, 2), fock(0, 2), std::nullopt, CouplerState::level(Level::g));
  SolverConfig cfg;
  cfg.method = Method::rk4;
  cfg.dt = 0.2 / p.Delta_a;
  cfg.trace_tolerance = 1e-12;
  EXPECT_THROW(integrate(psi, full_hamiltonian(p, dims), cfg, 1e-9), SolverError);
}

TEST(Integrate, RejectsBadInput) {
  auto rho = DensityMatrix::from_ket(oracle::random_ket(kQubitPair.shape(), 1));
  SolverConfig cfg;
  EXPECT_THROW(integrate(rho, zero_h(kQubitPair), {}, cfg, 0.0), ParameterError);
  DensityMatrix bad(rho.shape(), 2.0 * rho.matrix());
  EXPECT_THROW(integrate(bad, zero_h(kQubitPair), {}, cfg, 1e-6), StateError);
  EXPECT_THROW(integrate(rho, zero_h(SystemDims{3, 2, 0, {Level::g, Level::gp}}), {}, cfg, 1e-6), DimensionError);
  EXPECT_THROW(parse_method("euler"), ParameterError);
  EXPECT_EQ(parse_method("dopri5"), Method::dopri5);
  EXPECT_THROW(parse_hamiltonian("stage2"), ParameterError);
}

TEST(Integrate, TimesStrictlyIncreasingWithMarks) {
  SolverConfig cfg;
  cfg.method = Method::rk4;
  cfg.dt = 1e-8;
  cfg.sample_every = 7;
  cfg.marks = {0.333e-6};
  auto tr = integrate(DensityMatrix::from_ket(oracle::random_ket(kQubitPair.shape(), 2)), zero_h(kQubitPair), {},
                      cfg, 1e-6);
  for (std::size_t i = 1; i < tr.times.size(); ++i) EXPECT_GT(tr.times[i], tr.times[i - 1]);
  EXPECT_NEAR(tr.at(0.333e-6).time, 0.33e-6, 1e-15);
  EXPECT_NEAR(tr.times.back(), 1e-6, 1e-15);
}

OpenProtocolInput coherent_input(int n = 7) {
  OpenProtocolInput in;
  in.phi = coherent(1.0, n, 1e-4);
  in.phi_bar = coherent(-1.0, n, 1e-4);
  in.params = paper().physical;
  return in;
}

TEST(Protocol, ClosedEffectiveRunReachesTheTarget) {
  auto in = coherent_input(15);
  in.phi = coherent(1.0, 15);
  in.phi_bar = coherent(-1.0, 15);
  auto r = simulate_protocol_open(in);
  EXPECT_TRUE(r.pure);
  EXPECT_NEAR(r.t_swap, 0.5e-6, 1e-15);
  EXPECT_GE(r.fidelity_at_swap, 0.999);
  EXPECT_EQ(r.trajectory.diagnostics.steps, 786);
}

TEST(Protocol, PrimedOnlyBranchSeesOnlyDecoherence) {
  auto in = coherent_input();
  in.alpha = 1.0;
  in.beta = 0.0;
  auto closed = simulate_protocol_open(in);
  for (const auto& s : closed.trajectory.samples) EXPECT_NEAR(s.fidelity, 1.0, 1e-12);
  in.rates = DecoherenceRates::supplement();
  auto open = simulate_protocol_open(in);
  double prev = 1.0 + 1e-12;
  for (const auto& s : open.trajectory.samples) {
    EXPECT_LE(s.fidelity, prev);
    prev = s.fidelity;
  }
}

TEST(Protocol, HalvingTheStepIsConverged) {
  auto in = coherent_input();
  in.rates = DecoherenceRates::supplement();
  in.steps_per_swap = 786;
  const double f1 = simulate_protocol_open(in).fidelity_at_swap;
  in.steps_per_swap = 1572;
  const double f2 = simulate_protocol_open(in).fidelity_at_swap;
  EXPECT_LE(std::abs(f1 - f2), 1e-5);
}

TEST(Csv, HeaderAndPrecision) {
  Trajectory tr;
  MetricSample s;
  s.time = 0.123456789012345e-6;
  s.fidelity = 0.98765432109876;
  s.populations = {0.5, 0.25, 0.125, 0.0625};
  tr.samples.push_back(s);
  std::ostringstream os;
  write_csv(os, tr);
  EXPECT_EQ(os.str(),
            "time_us,fidelity,trace,purity,pop_e,pop_f,pop_gprime\n"
            "0.123456789012,0.987654321099,1,1,0.125,0.0625,0.25\n");
}

}  // namespace
}  // namespace fockswap
