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

// Oscillator and coupler state factories.
//
// Oscillator states are truncated to Fock levels 0..n-1 and renormalized.
// The probability that the untruncated state has above the cutoff is kept
// on the ket as `tail_mass()`; a factory refuses to build a state whose tail
// exceeds the tolerance and reports the truncation that would be needed.

#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "fockswap/hilbert.hpp"

namespace fockswap {

inline constexpr double kDefaultTailTol = 1e-6;

enum class Parity { even, odd };

struct FockSpec {
  int n = 0;
  bool operator==(const FockSpec&) const = default;
};
struct CoherentSpec {
  cplx alpha;
  bool operator==(const CoherentSpec&) const = default;
};
/// Squeezed vacuum S(xi)|0>; -xi is the same squeezing along the
/// perpendicular quadrature (phase shifted by pi).
struct SqueezedSpec {
  cplx xi;
  bool operator==(const SqueezedSpec&) const = default;
};
/// (|alpha> + |-alpha>) for even parity, (|alpha> - |-alpha>) for odd.
struct CatSpec {
  cplx alpha;
  Parity parity = Parity::even;
  bool operator==(const CatSpec&) const = default;
};
struct CustomSpec {
  std::vector<cplx> amplitudes;
  bool operator==(const CustomSpec&) const = default;
};

using OscKind = std::variant<FockSpec, CoherentSpec, SqueezedSpec, CatSpec, CustomSpec>;

struct OscState {
  OscKind kind;
  int truncation = 0;
  bool operator==(const OscState&) const = default;
};

namespace detail {

// Fock-basis probability of the untruncated state, p(m), m = 0, 1, ...
using Distribution = std::function<double(int)>;

// Sum of p(m) over m >= n. The distributions used here are unimodal up to
// parity zeros, so the sum stops after four consecutive terms past the mode
// fall below 1e-22.
inline double tail_from(const Distribution& p, int n, double mean) {
  double s = 0.0;
  int small = 0;
  for (int m = n; m < n + 100000; ++m) {
    const double t = p(m);
    s += t;
    small = t < 1e-22 ? small + 1 : 0;
    if (m > mean + 1 && small >= 4) break;
  }
  return s;
}

inline int required_truncation(const Distribution& p, double tol, double mean) {
  for (int n = 2; n < 100000; ++n)
    if (tail_from(p, n, mean) <= tol) return n;
  return 0;
}

inline void check_tail(const Distribution& p, int n, double tol, double mean, const std::string& what,
                       double& tail) {
  if (n < 2) throw DimensionError("oscillator truncation must be >= 2");
  tail = tail_from(p, n, mean);
  if (tail > tol) {
    const int need = required_truncation(p, tol, mean);
    throw TruncationError(what + ": tail mass " + std::to_string(tail) + " above tolerance at truncation " +
                              std::to_string(n) + "; needs truncation >= " + std::to_string(need),
                          need);
  }
}

inline double log_poisson(double mean, int m) {
  if (mean == 0.0) return m == 0 ? 0.0 : -INFINITY;
  return -mean + m * std::log(mean) - std::lgamma(m + 1.0);
}

}  // namespace detail

inline Ket fock(int photons, int n) {
  if (n < 2) throw DimensionError("oscillator truncation must be >= 2");
  if (photons < 0 || photons >= n)
    throw TruncationError("Fock state |" + std::to_string(photons) + "> needs truncation >= " +
                              std::to_string(photons + 1),
                          photons + 1);
  Vec v = Vec::Zero(n);
  v(photons) = 1.0;
  return Ket(Shape::mode(n), std::move(v));
}

/// Coherent state with amplitudes proportional to alpha^m / sqrt(m!).
inline Ket coherent(cplx alpha, int n, double tail_tol = kDefaultTailTol) {
  const double mean = std::norm(alpha);
  detail::Distribution p = [mean](int m) { return std::exp(detail::log_poisson(mean, m)); };
  double tail = 0.0;
  detail::check_tail(p, n, tail_tol, mean, "coherent state", tail);
  Vec v(n);
  v(0) = 1.0;
  for (int m = 1; m < n; ++m) v(m) = v(m - 1) * alpha / std::sqrt(static_cast<double>(m));
  return Ket(Shape::mode(n), v / v.norm(), tail);
}

/// Squeezed vacuum: c_{2m} ~ (-e^{i theta} tanh r)^m sqrt((2m)!) / (2^m m!),
/// xi = r e^{i theta}; odd amplitudes vanish.
inline Ket squeezed_vacuum(cplx xi, int n, double tail_tol = kDefaultTailTol) {
  const double r = std::abs(xi);
  const double theta = std::arg(xi);
  const double th = std::tanh(r);
  auto log_weight = [r, th](int m) {
    // log |c_{2m}|^2 of the normalized untruncated state
    if (th == 0.0) return m == 0 ? 0.0 : -INFINITY;
    return 2.0 * m * std::log(th) + std::lgamma(2.0 * m + 1) - 2.0 * m * std::log(2.0) -
           2.0 * std::lgamma(m + 1.0) - std::log(std::cosh(r));
  };
  detail::Distribution p = [&](int k) { return (k % 2) ? 0.0 : std::exp(log_weight(k / 2)); };
  const double mean = std::sinh(r) * std::sinh(r);
  double tail = 0.0;
  detail::check_tail(p, n, tail_tol, mean, "squeezed vacuum", tail);
  Vec v = Vec::Zero(n);
  // phase of (-e^{i theta})^m
  for (int m = 0; 2 * m < n; ++m)
    v(2 * m) = std::exp(0.5 * log_weight(m)) * std::polar(1.0, m * (theta + kPi));
  return Ket(Shape::mode(n), v / v.norm(), tail);
}

/// Normalized (|alpha> +/- |-alpha>) / sqrt(2 (1 +/- e^{-2|alpha|^2})).
inline Ket cat(cplx alpha, Parity parity, int n, double tail_tol = kDefaultTailTol) {
  const double mean_c = std::norm(alpha);
  const double sgn = parity == Parity::even ? 1.0 : -1.0;
  const double norm2 = 2.0 * (1.0 + sgn * std::exp(-2.0 * mean_c));
  if (parity == Parity::odd && mean_c == 0.0) throw StateError("odd cat state with alpha = 0 is the zero vector");
  detail::Distribution p = [=](int m) {
    const double par = (m % 2 == 0) ? 1.0 + sgn : 1.0 - sgn;
    return par == 0.0 ? 0.0 : std::exp(detail::log_poisson(mean_c, m)) * par * par / norm2;
  };
  double tail = 0.0;
  detail::check_tail(p, n, tail_tol, mean_c + 1.0, "cat state", tail);
  Vec v(n);
  cplx c = 1.0;
  for (int m = 0; m < n; ++m) {
    if (m > 0) c *= alpha / std::sqrt(static_cast<double>(m));
    const double par = (m % 2 == 0) ? 1.0 + sgn : 1.0 - sgn;
    v(m) = c * par;
  }
  if (v.norm() == 0.0) throw StateError("cat state vanishes within the truncation");
  return Ket(Shape::mode(n), v / v.norm(), tail);
}

/// Arbitrary amplitude list padded with zeros to the truncation.
inline Ket custom_state(const std::vector<cplx>& amplitudes, int n) {
  if (n < 2) throw DimensionError("oscillator truncation must be >= 2");
  if (static_cast<int>(amplitudes.size()) > n)
    throw TruncationError("custom state has more amplitudes than the truncation", static_cast<int>(amplitudes.size()));
  Vec v = Vec::Zero(n);
  for (std::size_t i = 0; i < amplitudes.size(); ++i) v(static_cast<Eigen::Index>(i)) = amplitudes[i];
  if (v.norm() == 0.0) throw StateError("custom state is the zero vector");
  return Ket(Shape::mode(n), v / v.norm());
}

inline Ket prepare(const OscState& s, double tail_tol = kDefaultTailTol) {
  return std::visit(
      [&](const auto& k) -> Ket {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, FockSpec>) return fock(k.n, s.truncation);
        else if constexpr (std::is_same_v<T, CoherentSpec>) return coherent(k.alpha, s.truncation, tail_tol);
        else if constexpr (std::is_same_v<T, SqueezedSpec>) return squeezed_vacuum(k.xi, s.truncation, tail_tol);
        else if constexpr (std::is_same_v<T, CatSpec>) return cat(k.alpha, k.parity, s.truncation, tail_tol);
        else return custom_state(k.amplitudes, s.truncation);
      },
      s.kind);
}

/// Coupler amplitudes on (g, g', e, f).
struct CouplerState {
  std::array<cplx, kCouplerLevels> amplitudes{1.0, 0.0, 0.0, 0.0};

  static CouplerState level(Level l) {
    CouplerState s;
    s.amplitudes = {0.0, 0.0, 0.0, 0.0};
    s.amplitudes[static_cast<int>(l)] = 1.0;
    return s;
  }

  /// alpha|g'> + beta|g>.
  static CouplerState superposition(cplx alpha, cplx beta) {
    CouplerState s;
    s.amplitudes = {beta, alpha, 0.0, 0.0};
    return s;
  }

  double norm() const {
    double n = 0.0;
    for (auto a : amplitudes) n += std::norm(a);
    return std::sqrt(n);
  }

  bool operator==(const CouplerState&) const = default;
};

/// Coupler ket on the retained levels; refuses amplitude on dropped levels.
inline Ket coupler_ket(const CouplerState& s, const std::vector<Level>& levels = kAllLevels) {
  const double n = s.norm();
  if (!(n > 0.0)) throw StateError("coupler state is the zero vector");
  Vec v(static_cast<Eigen::Index>(levels.size()));
  for (std::size_t i = 0; i < levels.size(); ++i) v(static_cast<Eigen::Index>(i)) = s.amplitudes[static_cast<int>(levels[i])];
  for (Level l : kAllLevels)
    if (std::find(levels.begin(), levels.end(), l) == levels.end() && s.amplitudes[static_cast<int>(l)] != cplx{0.0})
      throw DimensionError("coupler state has amplitude on a dropped level");
  return Ket(Shape::coupler(levels), v / n);
}

/// |a> (x) |b> [(x) |c>] (x) |coupler> in the global factor order.
inline Ket product_state(const Ket& a, const Ket& b, const std::optional<Ket>& c, const CouplerState& coupler,
                         const std::vector<Level>& levels = kAllLevels) {
  std::vector<Ket> parts{as_subsystem(a.normalized(), Subsystem::a), as_subsystem(b.normalized(), Subsystem::b)};
  if (c) parts.push_back(as_subsystem(c->normalized(), Subsystem::c));
  parts.push_back(coupler_ket(coupler, levels));
  return tensor(std::span<const Ket>(parts)).normalized();
}

/// Zero-pads (or truncates, if the dropped amplitudes vanish) a single-mode
/// ket to `n` levels.
inline Ket resize_mode(const Ket& k, int n) {
  if (k.shape().factors().size() != 1) throw DimensionError("resize needs a single-factor ket");
  const auto& v = k.amplitudes();
  Vec out = Vec::Zero(n);
  const Eigen::Index keep = std::min<Eigen::Index>(n, v.size());
  out.head(keep) = v.head(keep);
  if (v.size() > n && v.tail(v.size() - n).norm() > 1e-12)
    throw TruncationError("state does not fit in truncation " + std::to_string(n), static_cast<int>(v.size()));
  return Ket(Shape({{k.shape().factors()[0].id, n}}), std::move(out), k.tail_mass());
}

inline double mean_photon_number(const Ket& k) {
  double s = 0.0;
  for (Eigen::Index m = 0; m < k.dimension(); ++m) s += static_cast<double>(m) * std::norm(k[m]);
  return s / k.amplitudes().squaredNorm();
}

}  // namespace fockswap
