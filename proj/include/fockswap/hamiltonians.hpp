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

// Hamiltonians of the two-oscillator / four-level-coupler system.
//
// All rates are angular frequencies in rad/s. Time-dependent Hamiltonians
// are kept symbolic as a static part plus phased terms
//     c e^{i nu t} X + h.c.
// so that integrators can evaluate them at any time and recognise fast
// rotating pieces.

#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "fockswap/hilbert.hpp"

namespace fockswap {

/// Parameters of the circuit Hamiltonian. delta_a is derived from
/// Delta_a - Delta and cannot be set independently.
struct PhysicalParams {
  double g_a = 0.0;      // oscillator a <-> g-f coupling
  double g_b = 0.0;      // oscillator b <-> g-e coupling
  double Omega = 0.0;    // pulse Rabi frequency (e-f)
  double Delta_a = 0.0;  // omega_fg - omega_a
  double Delta = 0.0;    // omega_fe - omega_p
  double delta_b = 0.0;  // omega_eg - omega_b
  double omega_a = 0.0;  // resonator frequencies (only enter the crosstalk phase)
  double omega_b = 0.0;
  double g_ab = 0.0;     // inter-resonator crosstalk
  int k = 1;
  Sign lambda_sign = Sign::positive;

  double delta_a() const { return Delta_a - Delta; }
  double Delta_ab() const { return omega_a - omega_b; }
  double g_tilde_a() const { return g_a * Omega * (1.0 / Delta_a + 1.0 / Delta) / 2.0; }
  bool phase_matched(double rel = 1e-9) const {
    return std::abs(delta_a() - delta_b) <= rel * std::max(std::abs(delta_a()), std::abs(delta_b));
  }
  /// Conditional coupling g~_a g_b / delta of the matched effective Hamiltonian.
  double lambda() const { return g_tilde_a() * g_b / delta_a(); }

  bool operator==(const PhysicalParams&) const = default;
};

/// Parameters of the ideal conditional Hamiltonian.
struct IdealParams {
  double omega = 0.0;   // conditional frequency shift (may be negative)
  double lambda = 0.0;  // conditional beam-splitter coupling (sign carried)

  double t_swap() const {
    if (lambda == 0.0) throw ParameterError("lambda = 0 has no swap time");
    return kPi / (2.0 * std::abs(lambda));
  }
  Sign sign() const { return lambda >= 0.0 ? Sign::positive : Sign::negative; }
  bool operator==(const IdealParams&) const = default;
};

/// c e^{i nu t} X + h.c. If `charge` is set, it is the diagonal of an
/// operator Q with [Q, X] = X, so that the term at time t0 + s equals the
/// term at s conjugated by the diagonal rotation e^{i nu t0 Q}.
struct PhasedTerm {
  cplx amplitude;
  double frequency = 0.0;
  OperatorMatrix op;
  std::optional<RealVec> charge;
  std::string label;
};

class Hamiltonian {
 public:
  explicit Hamiltonian(OperatorMatrix static_part, std::vector<PhasedTerm> terms = {})
      : static_(std::move(static_part)), terms_(std::move(terms)) {
    if (!static_.is_hermitian()) static_ = static_.as_hermitian();
    for (const auto& t : terms_)
      if (!(t.op.shape() == static_.shape())) throw DimensionError("phased term shape differs from static part");
  }

  const Shape& shape() const { return static_.shape(); }
  const OperatorMatrix& static_part() const { return static_; }
  const std::vector<PhasedTerm>& terms() const { return terms_; }
  bool is_static() const { return terms_.empty(); }

  OperatorMatrix at(double t) const {
    SparseMat m = static_.matrix();
    for (const auto& term : terms_) {
      const cplx c = term.amplitude * std::polar(1.0, term.frequency * t);
      SparseMat x = c * term.op.matrix();
      m += x;
      m += SparseMat(x.adjoint());
    }
    return OperatorMatrix(shape(), std::move(m), true);
  }

  double max_frequency() const {
    double f = 0.0;
    for (const auto& t : terms_) f = std::max(f, std::abs(t.frequency));
    return f;
  }

  friend Hamiltonian operator+(const Hamiltonian& x, const Hamiltonian& y) {
    std::vector<PhasedTerm> terms = x.terms_;
    terms.insert(terms.end(), y.terms_.begin(), y.terms_.end());
    return Hamiltonian(x.static_ + y.static_, std::move(terms));
  }

 private:
  OperatorMatrix static_;
  std::vector<PhasedTerm> terms_;
};

namespace detail {

struct Ops {
  Shape shape;
  OperatorMatrix a, ad, b, bd, na, nb;

  explicit Ops(const SystemDims& dims) : shape(dims.shape()) {
    a = lift(annihilation(dims.n_a), Subsystem::a, shape);
    ad = a.adjoint();
    b = lift(annihilation(dims.n_b), Subsystem::b, shape);
    bd = b.adjoint();
    na = lift(number_operator(dims.n_a), Subsystem::a, shape);
    nb = lift(number_operator(dims.n_b), Subsystem::b, shape);
  }

  OperatorMatrix q(Level to, Level from) const { return lift(coupler_transition(to, from), Subsystem::coupler, shape); }
  OperatorMatrix proj(Level l) const { return q(l, l); }
};

inline void require_levels(const SystemDims& dims, std::initializer_list<Level> need, const char* what) {
  for (Level l : need)
    if (std::find(dims.coupler_levels.begin(), dims.coupler_levels.end(), l) == dims.coupler_levels.end())
      throw DimensionError(std::string(what) + " needs coupler level " + std::string(name(l)));
}

inline void require_matched(const PhysicalParams& p) {
  if (!p.phase_matched())
    throw ParameterError("effective Hamiltonian requires delta_a = delta_b (got " + std::to_string(p.delta_a()) +
                         " vs " + std::to_string(p.delta_b) + " rad/s)");
  if (!(p.delta_a() > 0.0)) throw ParameterError("effective Hamiltonian requires delta > 0");
}

}  // namespace detail

/// omega (a+a + b+b)|g><g| + lambda (a+b + ab+)|g><g|
inline OperatorMatrix build_ideal(const IdealParams& p, const SystemDims& dims) {
  detail::require_levels(dims, {Level::g}, "ideal Hamiltonian");
  detail::Ops o(dims);
  const auto pg = o.proj(Level::g);
  auto h = p.omega * ((o.na + o.nb) * pg) + p.lambda * ((o.ad * o.b + o.a * o.bd) * pg);
  return h.as_hermitian();
}

/// The two commuting pieces of the ideal Hamiltonian (number part, exchange part).
inline std::pair<OperatorMatrix, OperatorMatrix> build_ideal_parts(const IdealParams& p, const SystemDims& dims) {
  detail::Ops o(dims);
  const auto pg = o.proj(Level::g);
  return {(p.omega * ((o.na + o.nb) * pg)).as_hermitian(),
          (p.lambda * ((o.ad * o.b + o.a * o.bd) * pg)).as_hermitian()};
}

/// Interaction-picture circuit Hamiltonian:
/// g_a e^{i Delta_a t} a s_fg+ + g_b e^{i delta_b t} b s_eg+ + Omega e^{i Delta t} s_fe+ + H.c.
inline Hamiltonian full_hamiltonian(const PhysicalParams& p, const SystemDims& dims) {
  if (!dims.full_coupler()) throw DimensionError("full Hamiltonian needs all four coupler levels");
  detail::Ops o(dims);
  std::vector<PhasedTerm> terms;
  terms.push_back({p.g_a, p.Delta_a, o.a * o.q(Level::f, Level::g), std::nullopt, "g_a a s_fg+"});
  terms.push_back({p.g_b, p.delta_b, o.b * o.q(Level::e, Level::g), std::nullopt, "g_b b s_eg+"});
  terms.push_back({p.Omega, p.Delta, o.q(Level::f, Level::e), std::nullopt, "Omega s_fe+"});
  return Hamiltonian(OperatorMatrix::zero(o.shape), std::move(terms));
}

inline OperatorMatrix build_full(const PhysicalParams& p, double t, const SystemDims& dims) {
  return full_hamiltonian(p, dims).at(t);
}

/// g_ab e^{i Delta_ab t} a+ b + h.c., identity on the coupler.
inline Hamiltonian crosstalk_hamiltonian(const PhysicalParams& p, const SystemDims& dims) {
  detail::Ops o(dims);
  std::vector<PhasedTerm> terms;
  if (p.g_ab != 0.0) {
    RealVec q = o.na.dense().diagonal().real();
    terms.push_back({p.g_ab, p.Delta_ab(), o.ad * o.b, std::move(q), "crosstalk a+ b"});
  }
  return Hamiltonian(OperatorMatrix::zero(o.shape), std::move(terms));
}

inline OperatorMatrix build_crosstalk(const PhysicalParams& p, double t, const SystemDims& dims) {
  return crosstalk_hamiltonian(p, dims).at(t);
}

/// After eliminating the far-detuned a <-> g-f and pulse transitions: Stark
/// shifts plus a Raman coupling of oscillator a to the g-e transition.
inline Hamiltonian stage2_hamiltonian(const PhysicalParams& p, const SystemDims& dims) {
  if (!dims.full_coupler()) throw DimensionError("stage-2 Hamiltonian needs all four coupler levels");
  detail::Ops o(dims);
  const auto pg = o.proj(Level::g), pe = o.proj(Level::e), pf = o.proj(Level::f);
  const double sa = p.g_a * p.g_a / p.Delta_a;
  const double sp = p.Omega * p.Omega / p.Delta;
  OperatorMatrix stat = sa * (pf + o.na * (pf - pg)) + sp * (pf - pe);
  std::vector<PhasedTerm> terms;
  terms.push_back({-p.g_tilde_a(), p.delta_a(), o.a * o.q(Level::e, Level::g), std::nullopt, "-g~_a a s_eg+"});
  terms.push_back({p.g_b, p.delta_b, o.b * o.q(Level::e, Level::g), std::nullopt, "g_b b s_eg+"});
  return Hamiltonian(stat.as_hermitian(), std::move(terms));
}

/// After also eliminating the g-e transition: all Stark shifts plus the
/// conditional hopping term with phase e^{i (delta_a - delta_b) t}. The
/// Raman Stark shift uses delta_a.
inline Hamiltonian stage3_hamiltonian(const PhysicalParams& p, const SystemDims& dims) {
  if (!dims.full_coupler()) throw DimensionError("stage-3 Hamiltonian needs all four coupler levels");
  detail::Ops o(dims);
  const auto pg = o.proj(Level::g), pe = o.proj(Level::e), pf = o.proj(Level::f);
  const double gt = p.g_tilde_a();
  const double s1 = gt * gt / p.delta_a();
  const double s2 = p.g_b * p.g_b / p.delta_b;
  const double s3 = p.g_a * p.g_a / p.Delta_a;
  const double s4 = p.Omega * p.Omega / p.Delta;
  OperatorMatrix stat = s1 * (pe + o.na * (pe - pg)) + s2 * (pe + o.nb * (pe - pg)) +
                        s3 * (pf + o.na * (pf - pg)) + s4 * (pf - pe);
  const double hop = -(gt * p.g_b / 2.0) * (1.0 / p.delta_a() + 1.0 / p.delta_b);
  std::vector<PhasedTerm> terms;
  terms.push_back({hop, p.delta_a() - p.delta_b, o.a * o.bd * pe - o.ad * o.b * pg, std::nullopt, "hopping"});
  return Hamiltonian(stat.as_hermitian(), std::move(terms));
}

/// Static effective Hamiltonian on the coupler ground level:
/// -(g_a^2/Delta_a + g~_a^2/delta) a+a|g><g| - (g_b^2/delta) b+b|g><g| + lambda (ab+ + a+b)|g><g|
inline OperatorMatrix build_effective(const PhysicalParams& p, const SystemDims& dims) {
  detail::require_matched(p);
  detail::require_levels(dims, {Level::g}, "effective Hamiltonian");
  detail::Ops o(dims);
  const auto pg = o.proj(Level::g);
  const double d = p.delta_a();
  const double gt = p.g_tilde_a();
  const double ca = -(p.g_a * p.g_a / p.Delta_a + gt * gt / d);
  const double cb = -(p.g_b * p.g_b / d);
  auto h = ca * (o.na * pg) + cb * (o.nb * pg) + p.lambda() * ((o.a * o.bd + o.ad * o.b) * pg);
  return h.as_hermitian();
}

/// Ideal-form parameters read off the effective Hamiltonian (valid when
/// the a and b Stark coefficients agree).
inline IdealParams effective_ideal(const PhysicalParams& p) {
  detail::require_matched(p);
  return {-(p.g_b * p.g_b / p.delta_a()), p.lambda()};
}

/// Wrapped residual of the phase condition -/+ pi/2 - omega t = 2 k pi,
/// in (-pi, pi]. "-" applies for lambda > 0.
inline double phase_residual(double omega, double t, Sign lambda_sign) {
  const double lhs = (lambda_sign == Sign::positive ? -kPi / 2.0 : kPi / 2.0) - omega * t;
  double r = std::remainder(lhs, kTwoPi);
  if (r <= -kPi) r += kTwoPi;
  return r;
}

struct SolvedParams {
  PhysicalParams physical;
  IdealParams ideal;
  double t_swap = 0.0;
  double matching_residual = 0.0;  // relative mismatch of the two Stark coefficients
};

/// Solves the matching relations for g_b and Omega given g_a, Delta_a,
/// Delta, delta and k, on the branch g_b / g~_a = 4k + 1 (lambda > 0).
inline SolvedParams solve_params(double g_a, double Delta_a, double Delta, double delta, int k) {
  if (!(g_a > 0.0) || !(Delta_a > 0.0) || !(Delta > 0.0) || !(delta > 0.0))
    throw ParameterError("g_a, Delta_a, Delta and delta must all be positive");
  if (k < 1) throw ParameterError("k must be >= 1");
  if (std::abs((Delta_a - Delta) - delta) > 1e-9 * delta)
    throw ParameterError("delta must equal Delta_a - Delta for the Raman resonance (got delta = " +
                         std::to_string(delta) + ", Delta_a - Delta = " + std::to_string(Delta_a - Delta) + ")");
  const double kk = 2.0 * k * (2.0 * k + 1.0);
  const double ratio = 4.0 * k + 1.0;

  PhysicalParams p;
  p.g_a = g_a;
  p.Delta_a = Delta_a;
  p.Delta = Delta;
  p.delta_b = delta;
  p.k = k;
  p.lambda_sign = Sign::positive;
  p.g_b = ratio * g_a / (2.0 * std::sqrt(kk * Delta_a / delta));
  p.Omega = (Delta * Delta_a / (Delta + Delta_a)) * std::sqrt(delta / (kk * Delta_a));

  SolvedParams out;
  out.physical = p;
  const double gt = p.g_tilde_a();
  const double lhs = g_a * g_a / Delta_a + g_a * g_a * p.Omega * p.Omega / (4.0 * delta) *
                                               std::pow(1.0 / Delta_a + 1.0 / Delta, 2);
  const double rhs = p.g_b * p.g_b / delta;
  out.matching_residual = std::abs(lhs - rhs) / rhs;
  if (out.matching_residual > 1e-9)
    throw ConsistencyError("Stark-shift matching failed: relative residual " + std::to_string(out.matching_residual));
  out.ideal = {-rhs, gt * p.g_b / delta};
  out.t_swap = out.ideal.t_swap();
  const double phase = phase_residual(out.ideal.omega, out.t_swap, Sign::positive);
  if (std::abs(phase) > 1e-9)
    throw ConsistencyError("solved parameters violate the phase condition by " + std::to_string(phase) + " rad");
  return out;
}

struct DetuningCondition {
  std::string name;
  double large = 0.0;  // side expected to dominate
  double small = 0.0;
  double ratio = 0.0;  // large / small
};

struct DetuningReport {
  std::vector<DetuningCondition> conditions;

  const DetuningCondition& find(const std::string& n) const {
    for (const auto& c : conditions)
      if (c.name == n) return c;
    throw Error("no detuning condition named " + n);
  }
};

/// Evaluates the large-detuning inequalities behind the effective
/// Hamiltonian. Nothing is enforced; ratios well above 1 mean the
/// condition holds. "Omega >> Delta" is reported as written alongside the
/// reversed comparison.
inline DetuningReport check_detuning_conditions(const PhysicalParams& p) {
  DetuningReport r;
  auto add = [&](std::string n, double large, double small) {
    const double ratio = small == 0.0 ? INFINITY : std::abs(large) / std::abs(small);
    r.conditions.push_back({std::move(n), large, small, ratio});
  };
  const double da = p.delta_a(), db = p.delta_b;
  const double gt = p.g_tilde_a();
  const double sa = p.g_a * p.g_a / p.Delta_a;
  const double sp = p.Omega * p.Omega / p.Delta;
  add("Delta_a >> g_a", p.Delta_a, p.g_a);
  add("Omega >> Delta", p.Omega, p.Delta);
  add("Delta >> Omega", p.Delta, p.Omega);
  add("Delta_a - delta_b >> g_a g_b (1/Delta_a + 1/delta_b)/2", p.Delta_a - db,
      p.g_a * p.g_b * (1.0 / p.Delta_a + 1.0 / db) / 2.0);
  add("Delta - delta_b >> Omega g_b (1/Delta + 1/delta_b)/2", p.Delta - db,
      p.Omega * p.g_b * (1.0 / p.Delta + 1.0 / db) / 2.0);
  add("delta_a >> g~_a", da, gt);
  add("delta_a >> g_a^2/Delta_a", da, sa);
  add("delta_a >> Omega^2/Delta", da, sp);
  add("delta_b >> g_b", db, p.g_b);
  add("delta_b >> g_a^2/Delta_a", db, sa);
  add("delta_b >> Omega^2/Delta", db, sp);
  return r;
}

}  // namespace fockswap
