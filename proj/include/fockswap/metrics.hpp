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

#pragma once

#include <array>
#include <cmath>
#include <iostream>
#include <span>

#include <Eigen/Eigenvalues>

#include "fockswap/hilbert.hpp"

namespace fockswap {

/// Quadratic forms below this are reported before being clipped to zero.
inline constexpr double kNegativeFormLogThreshold = -1e-9;
/// Eigenvalues below this are dropped from entropy sums.
inline constexpr double kEntropyCutoff = 1e-12;

/// sqrt(<ideal| rho |ideal>), with small negative forms clipped to 0.
inline double fidelity(const DensityMatrix& rho, const Ket& ideal) {
  if (!(rho.shape() == ideal.shape()))
    throw DimensionError("fidelity: state shapes differ " + rho.shape().describe() + " vs " + ideal.shape().describe());
  const double q = ideal.amplitudes().dot(rho.matrix() * ideal.amplitudes()).real();
  if (q < kNegativeFormLogThreshold) std::clog << "fockswap: clipping negative fidelity form " << q << "\n";
  return std::sqrt(std::max(0.0, q));
}

/// |<ideal|psi>| for a pure state.
inline double fidelity(const Ket& psi, const Ket& ideal) { return std::abs(inner(ideal, psi)); }

inline double purity(const DensityMatrix& rho) { return rho.matrix().squaredNorm(); }

/// Diagonal populations of (g, g', e, f); levels not represented read 0.
/// They sum to tr(rho).
inline std::array<double, kCouplerLevels> level_populations(const DensityMatrix& rho) {
  const Shape& s = rho.shape();
  if (!s.has(Subsystem::coupler)) throw DimensionError("state has no coupler");
  const int nq = s.dim_of(Subsystem::coupler);
  const auto& levels = s.coupler_levels();
  std::array<double, kCouplerLevels> p{};
  for (Eigen::Index i = 0; i < rho.dimension(); ++i)
    p[static_cast<int>(levels[static_cast<std::size_t>(i % nq)])] += rho.matrix()(i, i).real();
  return p;
}

inline std::array<double, kCouplerLevels> level_populations(const Ket& psi) {
  const Shape& s = psi.shape();
  if (!s.has(Subsystem::coupler)) throw DimensionError("state has no coupler");
  const int nq = s.dim_of(Subsystem::coupler);
  const auto& levels = s.coupler_levels();
  std::array<double, kCouplerLevels> p{};
  for (Eigen::Index i = 0; i < psi.dimension(); ++i)
    p[static_cast<int>(levels[static_cast<std::size_t>(i % nq)])] += std::norm(psi[i]);
  return p;
}

inline double von_neumann_entropy(const DensityMatrix& rho) {
  DenseMat h = 0.5 * (rho.matrix() + rho.matrix().adjoint());
  Eigen::SelfAdjointEigenSolver<DenseMat> es(h, Eigen::EigenvaluesOnly);
  double s = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const double l = es.eigenvalues()(i);
    if (l > kEntropyCutoff) s -= l * std::log(l);
  }
  return s;
}

/// Entropy (natural log) of the reduced state on the factors in `side`.
inline double entanglement_entropy(const Ket& psi, std::span<const Subsystem> side) {
  return von_neumann_entropy(partial_trace(psi.normalized(), side));
}

inline double entanglement_entropy(const Ket& psi, std::initializer_list<Subsystem> side) {
  std::vector<Subsystem> v(side);
  return entanglement_entropy(psi, std::span<const Subsystem>(v));
}

/// Only defined for pure states; a mixed input raises StateError.
inline double entanglement_entropy(const DensityMatrix& rho, std::span<const Subsystem> side) {
  const double tr = rho.trace().real();
  if (std::abs(purity(rho) - tr * tr) > 1e-9)
    throw StateError("entanglement entropy is only defined here for pure states");
  return von_neumann_entropy(partial_trace(rho, side));
}

inline double trace_distance(const DensityMatrix& x, const DensityMatrix& y) {
  if (!(x.shape() == y.shape())) throw DimensionError("trace distance: shapes differ");
  DenseMat d = x.matrix() - y.matrix();
  d = 0.5 * (d + d.adjoint()).eval();
  Eigen::SelfAdjointEigenSolver<DenseMat> es(d, Eigen::EigenvaluesOnly);
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

/// Trace distance of two pure states, sqrt(1 - |<x|y>|^2).
inline double trace_distance(const Ket& x, const Ket& y) {
  const double o = std::norm(inner(x.normalized(), y.normalized()));
  return std::sqrt(std::max(0.0, 1.0 - o));
}

/// Population of the highest retained Fock level of oscillators a and b.
inline std::array<double, 2> edge_populations(const DensityMatrix& rho) {
  const Shape& s = rho.shape();
  std::array<double, 2> out{};
  const int na = s.dim_of(Subsystem::a), nb = s.dim_of(Subsystem::b);
  const int sa = s.stride(*s.position(Subsystem::a)), sb = s.stride(*s.position(Subsystem::b));
  for (Eigen::Index i = 0; i < rho.dimension(); ++i) {
    const double p = rho.matrix()(i, i).real();
    if ((i / sa) % na == na - 1) out[0] += p;
    if ((i / sb) % nb == nb - 1) out[1] += p;
  }
  return out;
}

inline std::array<double, 2> edge_populations(const Ket& psi) {
  const Shape& s = psi.shape();
  std::array<double, 2> out{};
  const int na = s.dim_of(Subsystem::a), nb = s.dim_of(Subsystem::b);
  const int sa = s.stride(*s.position(Subsystem::a)), sb = s.stride(*s.position(Subsystem::b));
  for (Eigen::Index i = 0; i < psi.dimension(); ++i) {
    const double p = std::norm(psi[i]);
    if ((i / sa) % na == na - 1) out[0] += p;
    if ((i / sb) % nb == nb - 1) out[1] += p;
  }
  return out;
}

struct MetricSample {
  double time = 0.0;
  double fidelity = 0.0;
  double trace = 1.0;
  double purity = 1.0;
  std::array<double, kCouplerLevels> populations{};  // g, g', e, f
  std::array<double, 2> edge{};                     // top-Fock-level weight of a, b
};

inline MetricSample sample_metrics(double t, const DensityMatrix& rho, const Ket* ideal) {
  MetricSample m;
  m.time = t;
  m.fidelity = ideal ? fidelity(rho, *ideal) : 0.0;
  m.trace = rho.trace().real();
  m.purity = purity(rho);
  m.populations = level_populations(rho);
  m.edge = edge_populations(rho);
  return m;
}

inline MetricSample sample_metrics(double t, const Ket& psi, const Ket* ideal) {
  MetricSample m;
  m.time = t;
  m.fidelity = ideal ? fidelity(psi, *ideal) : 0.0;
  m.trace = psi.amplitudes().squaredNorm();
  m.purity = m.trace * m.trace;
  m.populations = level_populations(psi);
  m.edge = edge_populations(psi);
  return m;
}

}  // namespace fockswap
