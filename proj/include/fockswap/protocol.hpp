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

// The ideal conditional-swap entangling protocol.
//
// Starting from |phi>_a |phi_bar>_b (alpha|g'> + beta|g>), evolution under the
// ideal conditional Hamiltonian for t = pi / (2|lambda|) swaps the two
// oscillators on the |g> branch only. A pulse on the coupler followed by a
// measurement then leaves the oscillators in
//     alpha |phi>|phi_bar> +/- beta |phi_bar>|phi>.

#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <utility>

#include "fockswap/hamiltonians.hpp"
#include "fockswap/states.hpp"

namespace fockswap {

namespace detail {

inline void require_mode(const Ket& k, const char* what) {
  if (k.shape().factors().size() != 1 || k.shape().has(Subsystem::coupler))
    throw DimensionError(std::string(what) + " must be a single-oscillator ket");
}

inline Ket with_phases(const Ket& k, double per_photon) {
  Vec v = k.amplitudes();
  for (Eigen::Index n = 0; n < v.size(); ++n) v(n) *= std::polar(1.0, per_photon * static_cast<double>(n));
  return Ket(k.shape(), std::move(v), k.tail_mass());
}

inline void require_coefficients(cplx alpha, cplx beta) {
  const double n = std::norm(alpha) + std::norm(beta);
  if (std::abs(n - 1.0) > 1e-9)
    throw StateError("coupler coefficients must satisfy |alpha|^2 + |beta|^2 = 1 (got " + std::to_string(n) + ")");
}

}  // namespace detail

/// Exchange under the bare beam-splitter term at t = pi/(2|lambda|):
/// returns (new a, new b) with the photon-number phases e^{-/+ i n pi/2}
/// ("-" for lambda > 0).
inline std::pair<Ket, Ket> swap_oracle(const Ket& phi_a, const Ket& phi_b, Sign lambda_sign) {
  detail::require_mode(phi_a, "swap input a");
  detail::require_mode(phi_b, "swap input b");
  const double per = lambda_sign == Sign::positive ? -kPi / 2.0 : kPi / 2.0;
  return {detail::with_phases(phi_b, per), detail::with_phases(phi_a, per)};
}

/// Exchange including the conditional frequency shift omega over time t.
/// Requires -/+ pi/2 - omega t = 2 k pi to 1e-9, which removes every
/// photon-number phase.
inline std::pair<Ket, Ket> corrected_swap_oracle(const Ket& phi_a, const Ket& phi_b, double omega, double t,
                                                 Sign lambda_sign = Sign::positive) {
  const double res = phase_residual(omega, t, lambda_sign);
  if (std::abs(res) > 1e-9)
    throw PhaseConditionError("phase condition violated: residual " + std::to_string(res) + " rad", res);
  auto [a, b] = swap_oracle(phi_a, phi_b, lambda_sign);
  const double per = -omega * t;
  return {detail::with_phases(a, per), detail::with_phases(b, per)};
}

/// |x>_a |y>_b on shape (a, b).
inline Ket two_mode(const Ket& x, const Ket& y) {
  return tensor({as_subsystem(x, Subsystem::a), as_subsystem(y, Subsystem::b)});
}

/// alpha |phi>|phi_bar> +/- beta |phi_bar>|phi> (unnormalized when the two
/// states overlap).
inline Ket entangled_target(const Ket& phi, const Ket& phi_bar, cplx alpha, cplx beta, Sign sign) {
  const Ket x = two_mode(phi, phi_bar);
  const Ket y = two_mode(phi_bar, phi);
  return Ket(x.shape(), alpha * x.amplitudes() + to_double(sign) * beta * y.amplitudes());
}

/// Target after the conditional evolution:
/// alpha |phi>|phi_bar>|g'> + beta |phi_bar>|phi>|g>.
inline Ket ideal_pre_pulse_state(const Ket& phi, const Ket& phi_bar, cplx alpha, cplx beta, const SystemDims& dims) {
  detail::require_coefficients(alpha, beta);
  const Ket x = product_state(resize_mode(phi, dims.n_a), resize_mode(phi_bar, dims.n_b), std::nullopt,
                              CouplerState::level(Level::gp), dims.coupler_levels);
  const Ket y = product_state(resize_mode(phi_bar, dims.n_a), resize_mode(phi, dims.n_b), std::nullopt,
                              CouplerState::level(Level::g), dims.coupler_levels);
  Vec v = alpha * x.amplitudes() + beta * y.amplitudes();
  return Ket(x.shape(), std::move(v)).normalized();
}

/// |g'> -> (|g> + |g'>)/sqrt2, |g> -> (|g> - |g'>)/sqrt2; e, f untouched.
inline Ket apply_coupler_pulse(const Ket& psi) {
  const Shape& s = psi.shape();
  auto ig = s.coupler_index(Level::g), igp = s.coupler_index(Level::gp);
  if (!ig || !igp) throw DimensionError("coupler pulse needs levels g and g'");
  const int nq = s.dim_of(Subsystem::coupler);
  const double h = 1.0 / std::sqrt(2.0);
  Vec v = psi.amplitudes();
  for (Eigen::Index base = 0; base < v.size(); base += nq) {
    const cplx cg = psi[base + *ig], cgp = psi[base + *igp];
    v(base + *ig) = h * (cg + cgp);
    v(base + *igp) = h * (cgp - cg);
  }
  return Ket(s, std::move(v), psi.tail_mass());
}

/// Oscillator part of `psi` conditioned on coupler level `l` (unnormalized).
inline Ket coupler_component(const Ket& psi, Level l) {
  const Shape& s = psi.shape();
  auto il = s.coupler_index(l);
  if (!il) throw DimensionError("coupler level not represented");
  const int nq = s.dim_of(Subsystem::coupler);
  std::vector<Subsystem> rest;
  for (const auto& f : s.factors())
    if (f.id != Subsystem::coupler) rest.push_back(f.id);
  Shape out = s.subshape(rest);
  Vec v(out.dimension());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = psi[i * nq + *il];
  return Ket(std::move(out), std::move(v), psi.tail_mass());
}

struct Branch {
  Level outcome = Level::g;
  double probability = 0.0;
  Ket state;  // normalized oscillator state; zero vector if probability is 0
};

struct ProtocolResult {
  Ket pre_pulse_state;
  Ket post_pulse_state;
  std::array<Branch, 2> branches;  // outcomes g, g'

  const Branch& branch(Level l) const { return l == Level::g ? branches[0] : branches[1]; }
};

/// Conditional evolution under the ideal Hamiltonian for t_swap, coupler
/// pulse, and the two measurement branches.
inline ProtocolResult run_protocol(const Ket& phi, const Ket& phi_bar, cplx alpha, cplx beta, const IdealParams& p,
                                   const SystemDims& dims) {
  detail::require_coefficients(alpha, beta);
  const double t = p.t_swap();
  const double res = phase_residual(p.omega, t, p.sign());
  if (std::abs(res) > 1e-9)
    throw PhaseConditionError("ideal parameters violate the phase condition by " + std::to_string(res) + " rad", res);
  const Ket psi0 = product_state(resize_mode(phi, dims.n_a), resize_mode(phi_bar, dims.n_b), std::nullopt,
                                 CouplerState::superposition(alpha, beta), dims.coupler_levels);
  ProtocolResult r;
  r.pre_pulse_state = expm_apply(build_ideal(p, dims), psi0, t);
  r.post_pulse_state = apply_coupler_pulse(r.pre_pulse_state);
  for (int i = 0; i < 2; ++i) {
    const Level l = i == 0 ? Level::g : Level::gp;
    Ket comp = coupler_component(r.post_pulse_state, l);
    const double prob = comp.amplitudes().squaredNorm();
    r.branches[i] = {l, prob, prob > 0.0 ? comp.normalized() : comp};
  }
  return r;
}

/// Inserts oscillator c in |0> (truncation 2) into a state on (a, b, coupler).
inline Ket with_vacuum_c(const Ket& psi) {
  const Shape& s = psi.shape();
  if (s.has(Subsystem::c)) throw DimensionError("state already contains oscillator c");
  const int na = s.dim_of(Subsystem::a), nb = s.dim_of(Subsystem::b), nq = s.dim_of(Subsystem::coupler);
  Shape out({{Subsystem::a, na}, {Subsystem::b, nb}, {Subsystem::c, 2}, {Subsystem::coupler, nq}},
            s.coupler_levels());
  Vec v = Vec::Zero(out.dimension());
  for (Eigen::Index ab = 0; ab < static_cast<Eigen::Index>(na) * nb; ++ab)
    for (int q = 0; q < nq; ++q) v(ab * 2 * nq + q) = psi[ab * nq + q];
  return Ket(std::move(out), std::move(v), psi.tail_mass());
}

/// Ideal local map |g'>|0>_c -> |g>|1>_c, |g>|0>_c -> |g>|0>_c applied to a
/// pre-pulse state that includes oscillator c in vacuum.
inline Ket tripartite_map(const Ket& pre_pulse) {
  const Shape& s = pre_pulse.shape();
  if (!s.has(Subsystem::c) || s.dim_of(Subsystem::c) != 2)
    throw DimensionError("tripartite map needs oscillator c with truncation 2");
  auto ig = s.coupler_index(Level::g), igp = s.coupler_index(Level::gp);
  if (!ig || !igp) throw DimensionError("tripartite map needs coupler levels g and g'");
  const int nq = s.dim_of(Subsystem::coupler);
  const Eigen::Index blocks = pre_pulse.dimension() / (2 * nq);
  Vec v = Vec::Zero(pre_pulse.dimension());
  for (Eigen::Index ab = 0; ab < blocks; ++ab) {
    const Eigen::Index c0 = ab * 2 * nq, c1 = c0 + nq;
    for (int q = 0; q < nq; ++q) {
      if (std::abs(pre_pulse[c1 + q]) > 1e-12) throw StateError("oscillator c is not in the vacuum");
      if (q != *ig && q != *igp && std::abs(pre_pulse[c0 + q]) > 1e-12)
        throw StateError("coupler has population outside {g, g'}");
    }
    v(c0 + *ig) = pre_pulse[c0 + *ig];
    v(c1 + *ig) = pre_pulse[c0 + *igp];
  }
  return Ket(s, std::move(v), pre_pulse.tail_mass());
}

struct SwapGateReport {
  // |phi phi>, |phi phi_bar>, |phi_bar phi>, |phi_bar phi_bar>
  std::array<double, 4> infidelity{};
  double worst = 0.0;
};

/// Evolves each of the four encoded product states with the coupler in |g>
/// for t_swap and compares with the exchanged product.
inline SwapGateReport swap_gate_check(const Ket& phi, const Ket& phi_bar, const IdealParams& p,
                                      const SystemDims& dims) {
  const double t = p.t_swap();
  const double res = phase_residual(p.omega, t, p.sign());
  if (std::abs(res) > 1e-9)
    throw PhaseConditionError("ideal parameters violate the phase condition by " + std::to_string(res) + " rad", res);
  const OperatorMatrix h = build_ideal(p, dims);
  const std::array<const Ket*, 2> code{&phi, &phi_bar};
  const CouplerState g = CouplerState::level(Level::g);
  SwapGateReport r;
  int i = 0;
  for (int x = 0; x < 2; ++x)
    for (int y = 0; y < 2; ++y, ++i) {
      const Ket in = product_state(resize_mode(*code[x], dims.n_a), resize_mode(*code[y], dims.n_b), std::nullopt, g,
                                   dims.coupler_levels);
      const Ket want = product_state(resize_mode(*code[y], dims.n_a), resize_mode(*code[x], dims.n_b), std::nullopt,
                                     g, dims.coupler_levels);
      const Ket out = expm_apply(h, in, t);
      r.infidelity[i] = std::max(0.0, 1.0 - std::norm(inner(want, out)));
      r.worst = std::max(r.worst, r.infidelity[i]);
    }
  return r;
}

}  // namespace fockswap
