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

// Lindblad master-equation integration.
//
//   drho/dt = -i[H(t), rho] + sum_k gamma_k (L rho L+ - L+L rho/2 - rho L+L/2)
//
// is evaluated as M + M+ + sum_k gamma_k L rho L+ with M = -i G rho and the
// non-Hermitian generator G = H - (i/2) sum_k gamma_k L+L.
//
// Three steppers are provided:
//   rk4     fixed step, any Hamiltonian
//   dopri5  adaptive Dormand-Prince 5(4), any Hamiltonian
//   split   Strang splitting: phased terms that carry a charge operator are
//           propagated exactly (their propagator over a step is computed once
//           and rotated to each start time), everything else by RK4
// When the uncharged part of the Hamiltonian is static, rk4 and split also
// propagate it exactly, block by block, and RK4 carries only the dissipator.
// The state is symmetrized after every step. The trace is never renormalized.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <numeric>
#include <ostream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "fockswap/hamiltonians.hpp"
#include "fockswap/metrics.hpp"
#include "fockswap/protocol.hpp"

namespace fockswap {

struct LindbladChannel {
  OperatorMatrix op;
  double rate = 0.0;  // 1/s
  std::string label;
};

/// Decay, relaxation and dephasing rates in 1/s (inverse lifetimes).
struct DecoherenceRates {
  double kappa_a = 0.0;
  double kappa_b = 0.0;
  double gamma_gpg = 0.0;  // g' -> g
  double gamma_eg = 0.0;
  double gamma_egp = 0.0;
  double gamma_fg = 0.0;
  double gamma_fgp = 0.0;
  double gamma_fe = 0.0;
  double gamma_phi_gp = 0.0;
  double gamma_phi_e = 0.0;
  double gamma_phi_f = 0.0;

  static DecoherenceRates none() { return {}; }

  /// Lifetimes used for the numerical results of the paper's supplement.
  static DecoherenceRates supplement() {
    const double us = 1e-6;
    DecoherenceRates r;
    r.kappa_a = 1.0 / (20 * us);
    r.kappa_b = 1.0 / (20 * us);
    r.gamma_gpg = 1.0 / (60 * us);
    r.gamma_egp = 1.0 / (40 * us);
    r.gamma_fe = 1.0 / (30 * us);
    r.gamma_eg = r.gamma_fgp = r.gamma_fg = 1.0 / (100 * us);
    r.gamma_phi_gp = r.gamma_phi_e = r.gamma_phi_f = 1.0 / (15 * us);
    return r;
  }

  std::array<std::pair<std::string_view, double>, 11> entries() const {
    return {{{"kappa_a", kappa_a},
             {"kappa_b", kappa_b},
             {"gamma_gpg", gamma_gpg},
             {"gamma_eg", gamma_eg},
             {"gamma_egp", gamma_egp},
             {"gamma_fg", gamma_fg},
             {"gamma_fgp", gamma_fgp},
             {"gamma_fe", gamma_fe},
             {"gamma_phi_gp", gamma_phi_gp},
             {"gamma_phi_e", gamma_phi_e},
             {"gamma_phi_f", gamma_phi_f}}};
  }

  double* field(std::string_view key) {
    if (key == "kappa_a") return &kappa_a;
    if (key == "kappa_b") return &kappa_b;
    if (key == "gamma_gpg") return &gamma_gpg;
    if (key == "gamma_eg") return &gamma_eg;
    if (key == "gamma_egp") return &gamma_egp;
    if (key == "gamma_fg") return &gamma_fg;
    if (key == "gamma_fgp") return &gamma_fgp;
    if (key == "gamma_fe") return &gamma_fe;
    if (key == "gamma_phi_gp") return &gamma_phi_gp;
    if (key == "gamma_phi_e") return &gamma_phi_e;
    if (key == "gamma_phi_f") return &gamma_phi_f;
    return nullptr;
  }

  void validate() const {
    for (const auto& [k, v] : entries())
      if (!(v >= 0.0) || !std::isfinite(v))
        throw ParameterError("decoherence rate " + std::string(k) + " must be finite and >= 0");
  }

  bool all_zero() const {
    for (const auto& [k, v] : entries())
      if (v != 0.0) return false;
    return true;
  }

  bool operator==(const DecoherenceRates&) const = default;
};

/// One channel per positive rate: a and b decay, the six coupler relaxation
/// paths, and projector dephasing of g', e and f. Channels that vanish on a
/// restricted coupler (for example f -> g when f is not represented) are
/// dropped.
inline std::vector<LindbladChannel> build_channels(const DecoherenceRates& r, const SystemDims& dims) {
  r.validate();
  detail::Ops o(dims);
  std::vector<LindbladChannel> out;
  auto add = [&](double rate, const OperatorMatrix& op, const char* label) {
    if (rate == 0.0 || op.nnz() == 0) return;
    out.push_back({op, rate, label});
  };
  add(r.kappa_a, o.a, "kappa_a");
  add(r.kappa_b, o.b, "kappa_b");
  add(r.gamma_fg, o.q(Level::g, Level::f), "gamma_fg");
  add(r.gamma_fgp, o.q(Level::gp, Level::f), "gamma_fgp");
  add(r.gamma_fe, o.q(Level::e, Level::f), "gamma_fe");
  add(r.gamma_eg, o.q(Level::g, Level::e), "gamma_eg");
  add(r.gamma_egp, o.q(Level::gp, Level::e), "gamma_egp");
  add(r.gamma_gpg, o.q(Level::g, Level::gp), "gamma_gpg");
  add(r.gamma_phi_gp, o.proj(Level::gp), "gamma_phi_gp");
  add(r.gamma_phi_e, o.proj(Level::e), "gamma_phi_e");
  add(r.gamma_phi_f, o.proj(Level::f), "gamma_phi_f");
  return out;
}

enum class Method { automatic, rk4, dopri5, split };

inline std::string_view name(Method m) {
  switch (m) {
    case Method::automatic: return "auto";
    case Method::rk4: return "rk4";
    case Method::dopri5: return "dopri5";
    case Method::split: return "split";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  if (s == "auto") return Method::automatic;
  if (s == "rk4") return Method::rk4;
  if (s == "dopri5") return Method::dopri5;
  if (s == "split") return Method::split;
  throw ParameterError("unknown solver method '" + std::string(s) + "' (auto, rk4, dopri5, split)");
}

struct SolverConfig {
  Method method = Method::automatic;
  double dt = 0.0;  // fixed-step size in s; 0 picks one from the generator norm
  double rtol = 1e-8;
  double atol = 1e-10;
  double max_step = 0.0;         // adaptive only; 0 = unbounded
  int sample_every = 1;          // fixed-step: steps between samples
  double sample_interval = 0.0;  // adaptive: time between samples; 0 = horizon / 100
  int positivity_checks = 10;    // eigenvalue checkpoints, at most 20
  double trace_tolerance = 1e-6;
  bool keep_snapshots = false;
  std::vector<double> marks;  // extra sample times

  bool operator==(const SolverConfig&) const = default;
};

struct Diagnostics {
  Method method = Method::automatic;
  double dt = 0.0;  // fixed step used (0 for adaptive)
  long steps = 0;
  long rejected = 0;
  long rhs_evaluations = 0;
  double max_trace_error = 0.0;
  double max_hermiticity_error = 0.0;
  double min_eigenvalue = std::numeric_limits<double>::infinity();
  int positivity_checked = 0;
  double unitarity_error = 0.0;  // exact block propagators
};

struct Trajectory {
  std::vector<double> times;
  std::vector<MetricSample> samples;
  std::vector<DensityMatrix> snapshots;  // filled when keep_snapshots is set
  std::vector<Ket> ket_snapshots;        // same, for pure-state runs
  Diagnostics diagnostics;

  /// Sample closest to time t.
  const MetricSample& at(double t) const {
    if (samples.empty()) throw Error("empty trajectory");
    auto it = std::min_element(samples.begin(), samples.end(), [t](const auto& x, const auto& y) {
      return std::abs(x.time - t) < std::abs(y.time - t);
    });
    return *it;
  }
};

namespace detail {

inline SparseMat pattern_of(const SparseMat& m) {
  SparseMat p = m;
  p.makeCompressed();
  p.coeffs().setConstant(cplx{1.0});
  return p;
}

/// Static part plus c e^{i nu t} X + h.c. terms on one merged sparsity
/// pattern, so that evaluation at time t only rewrites the value array.
class PhasedMatrix {
 public:
  PhasedMatrix(const SparseMat& base, const std::vector<PhasedTerm>& terms) {
    SparseMat pat = pattern_of(base);
    for (const auto& t : terms) {
      SparseMat x = pattern_of(t.op.matrix());
      pat += x;
      pat += SparseMat(x.adjoint());
    }
    pat.makeCompressed();
    m_ = pat;
    base_.assign(static_cast<std::size_t>(m_.nonZeros()), cplx{0.0});
    scatter(base, [&](Eigen::Index pos, cplx v) { base_[static_cast<std::size_t>(pos)] += v; });
    for (const auto& t : terms) {
      Entry e;
      e.amplitude = t.amplitude;
      e.frequency = t.frequency;
      scatter(t.op.matrix(), [&](Eigen::Index pos, cplx v) { e.fwd.emplace_back(pos, v); });
      scatter(SparseMat(t.op.matrix().adjoint()), [&](Eigen::Index pos, cplx v) { e.bwd.emplace_back(pos, v); });
      entries_.push_back(std::move(e));
    }
    std::copy(base_.begin(), base_.end(), m_.valuePtr());
  }

  bool is_static() const { return entries_.empty(); }

  const SparseMat& at(double t) {
    if (entries_.empty()) return m_;
    cplx* v = m_.valuePtr();
    std::copy(base_.begin(), base_.end(), v);
    for (const auto& e : entries_) {
      const cplx c = e.amplitude * std::polar(1.0, e.frequency * t);
      const cplx cc = std::conj(c);
      for (const auto& [p, x] : e.fwd) v[p] += c * x;
      for (const auto& [p, x] : e.bwd) v[p] += cc * x;
    }
    return m_;
  }

 private:
  struct Entry {
    cplx amplitude;
    double frequency = 0.0;
    std::vector<std::pair<Eigen::Index, cplx>> fwd, bwd;
  };

  template <class F>
  void scatter(const SparseMat& src, F&& f) const {
    for (int r = 0; r < src.outerSize(); ++r)
      for (SparseMat::InnerIterator it(src, r); it; ++it) {
        const auto* begin = m_.innerIndexPtr() + m_.outerIndexPtr()[r];
        const auto* end = m_.innerIndexPtr() + m_.outerIndexPtr()[r + 1];
        const auto* hit = std::lower_bound(begin, end, static_cast<int>(it.col()));
        f(hit - m_.innerIndexPtr(), it.value());
      }
  }

  SparseMat m_;
  std::vector<cplx> base_;
  std::vector<Entry> entries_;
};

/// L rho L+ for an operator with at most one entry per row, as a gather.
struct MonomialJump {
  std::vector<Eigen::Index> rows, cols;
  std::vector<cplx> vals;
  std::vector<Eigen::Index> entry_of_row;  // -1 where the row is empty
  double rate = 0.0;

  static bool applicable(const SparseMat& l) {
    for (int r = 0; r < l.outerSize(); ++r)
      if (l.outerIndexPtr()[r + 1] - l.outerIndexPtr()[r] > 1) return false;
    return true;
  }

  MonomialJump(const SparseMat& l, double gamma) : entry_of_row(l.rows(), -1), rate(gamma) {
    for (int r = 0; r < l.outerSize(); ++r)
      for (SparseMat::InnerIterator it(l, r); it; ++it) {
        entry_of_row[r] = static_cast<Eigen::Index>(rows.size());
        rows.push_back(r);
        cols.push_back(it.col());
        vals.push_back(it.value());
      }
  }

  /// Adds column j of gamma L rho L+ to `dst`.
  void add_column(const DenseMat& rho, Eigen::Index j, cplx* dst) const {
    const Eigen::Index e = entry_of_row[static_cast<std::size_t>(j)];
    if (e < 0) return;
    const cplx cj = rate * std::conj(vals[static_cast<std::size_t>(e)]);
    const cplx* src = rho.data() + cols[static_cast<std::size_t>(e)] * rho.rows();
    const std::size_t n = rows.size();
    for (std::size_t i = 0; i < n; ++i) dst[rows[i]] += vals[i] * cj * src[cols[i]];
  }
};

/// Right-hand side of the master equation (or of the Schrodinger equation
/// when there are no channels and the state is a ket).
class LindbladRhs {
 public:
  LindbladRhs(const SparseMat& static_part, const std::vector<PhasedTerm>& terms,
              const std::vector<LindbladChannel>& channels)
      : gen_(with_damping(static_part, channels), terms) {
    for (const auto& c : channels) {
      if (MonomialJump::applicable(c.op.matrix())) {
        mono_.emplace_back(c.op.matrix(), c.rate);
      } else {
        generic_.push_back(c.op.matrix());
        generic_rates_.push_back(c.rate);
      }
    }
  }

  long evaluations() const { return evals_; }

  /// out = -i (G rho - rho G+) + sum_k gamma_k L_k rho L_k+, one column at a
  /// time so that every read of rho is contiguous.
  void operator()(double t, const DenseMat& rho, DenseMat& out) {
    ++evals_;
    const SparseMat& g = gen_.at(t);
    const Eigen::Index n = rho.rows();
    out.resize(n, n);
    const int* outer = g.outerIndexPtr();
    const int* inner = g.innerIndexPtr();
    const cplx* val = g.valuePtr();
    for (Eigen::Index j = 0; j < n; ++j) {
      cplx* o = out.data() + j * n;
      const cplx* r = rho.data() + j * n;
      for (Eigen::Index i = 0; i < n; ++i) {
        cplx s{0.0};
        for (int p = outer[i]; p < outer[i + 1]; ++p) s += val[p] * r[inner[p]];
        o[i] = cplx(s.imag(), -s.real());
      }
      for (int p = outer[j]; p < outer[j + 1]; ++p) {
        const cplx c = kI * std::conj(val[p]);
        const cplx* rk = rho.data() + static_cast<Eigen::Index>(inner[p]) * n;
        for (Eigen::Index i = 0; i < n; ++i) o[i] += c * rk[i];
      }
      for (const auto& m : mono_) m.add_column(rho, j, o);
    }
    for (std::size_t k = 0; k < generic_.size(); ++k) {
      tmp_.noalias() = generic_[k] * rho;
      adj_ = tmp_.adjoint();
      out.noalias() += generic_rates_[k] * (generic_[k] * adj_);
    }
  }

  void operator()(double t, const Vec& psi, Vec& out) {
    ++evals_;
    out.noalias() = -kI * (gen_.at(t) * psi);
  }

 private:
  static SparseMat with_damping(const SparseMat& h, const std::vector<LindbladChannel>& channels) {
    SparseMat g = h;
    for (const auto& c : channels) {
      SparseMat ll = SparseMat(c.op.matrix().adjoint()) * c.op.matrix();
      g -= (0.5 * c.rate) * kI * ll;
    }
    g.makeCompressed();
    return g;
  }

  PhasedMatrix gen_;
  std::vector<MonomialJump> mono_;
  std::vector<SparseMat> generic_;
  std::vector<double> generic_rates_;
  DenseMat tmp_, adj_;
  long evals_ = 0;
};

/// Exact propagator for a static Hermitian part H and a sum of phased terms
/// that share one frequency nu and one charge operator Q with [Q, X] = X.
/// Over [t0, t0 + s] the phased terms alone propagate as R(t0) U0(s) R(t0)+
/// with R(t0) = exp(i nu t0 Q), so U0 is built once per step length. Both
/// parts are block diagonal on the connected components of their joint
/// sparsity pattern; products of the pieces are formed per block and applied
/// as dense products on a block-contiguous permutation of the state.
class BlockPropagator {
 public:
  static constexpr Eigen::Index kMaxBlock = 512;

  BlockPropagator(const SparseMat* h, std::vector<PhasedTerm> terms, Eigen::Index dim)
      : terms_(std::move(terms)), dim_(dim) {
    if (h && h->nonZeros() > 0) h_ = *h;
    if (!terms_.empty()) {
      nu_ = terms_.front().frequency;
      charge_ = *terms_.front().charge;
      for (const auto& t : terms_) {
        if (!t.charge || t.frequency != nu_ || (*t.charge - charge_).cwiseAbs().maxCoeff() > 0.0)
          throw ParameterError("split integration needs all fast terms to share one frequency and charge");
        if (t.op.dimension() != dim_) throw DimensionError("fast term dimension mismatch");
      }
    }
    build_blocks();
  }

  bool has_fast() const { return !terms_.empty(); }
  bool has_static() const { return h_.nonZeros() > 0; }
  Eigen::Index largest_block() const { return largest_; }
  double unitarity_error() const { return unitarity_error_; }

  /// Builds the per-block pieces for step length dt.
  void prepare(double dt) {
    hh_.clear();
    u_half_.clear();
    u_full_.clear();
    for (const auto& b : blocks_) {
      const Eigen::Index m = static_cast<Eigen::Index>(b.size());
      if (has_static()) {
        DenseMat hb = gather(h_, b);
        Eigen::SelfAdjointEigenSolver<DenseMat> es(hb);
        const Vec ph = (-kI * (dt / 2.0) * es.eigenvalues().cast<cplx>()).array().exp().matrix();
        hh_.push_back(es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint());
        track(hh_.back());
      }
      if (has_fast()) {
        DenseMat x = DenseMat::Zero(m, m);
        for (const auto& t : terms_) x += t.amplitude * gather(t.op.matrix(), b);
        u_half_.push_back(evolve_block(x, dt / 2.0));
        u_full_.push_back(evolve_block(x, dt));
        track(u_half_.back());
        track(u_full_.back());
      }
    }
  }

  /// Opening half of a step at t: H(dt/2) F(t, dt/2).
  template <class State>
  void open(double t, State& y) {
    compose(y, [&](std::size_t b, DenseMat& w) {
      w = fast(b, t, u_half_);
      if (has_static()) w = hh_[b] * w;
    });
  }

  /// Closing half of a step ending at t + dt/2: F(t, dt/2) H(dt/2).
  template <class State>
  void close(double t, State& y) {
    compose(y, [&](std::size_t b, DenseMat& w) {
      w = fast(b, t, u_half_);
      if (has_static()) w = w * hh_[b];
    });
  }

  /// Closing half of one step merged with the opening half of the next:
  /// H(dt/2) F(t, dt) H(dt/2).
  template <class State>
  void merged(double t, State& y) {
    compose(y, [&](std::size_t b, DenseMat& w) {
      w = fast(b, t, u_full_);
      if (has_static()) w = hh_[b] * w * hh_[b];
    });
  }

 private:
  DenseMat gather(const SparseMat& a, const std::vector<Eigen::Index>& idx) const {
    const Eigen::Index m = static_cast<Eigen::Index>(idx.size());
    DenseMat x = DenseMat::Zero(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
      for (SparseMat::InnerIterator it(a, idx[static_cast<std::size_t>(i)]); it; ++it)
        x(i, local_[static_cast<std::size_t>(it.col())]) += it.value();
    return x;
  }

  void track(const DenseMat& u) {
    const Eigen::Index m = u.rows();
    unitarity_error_ =
        std::max(unitarity_error_, (u.adjoint() * u - DenseMat::Identity(m, m)).cwiseAbs().maxCoeff());
  }

  /// R U0 R+ restricted to block b, or the identity without fast terms.
  DenseMat fast(std::size_t b, double t0, const std::vector<DenseMat>& u0) const {
    const auto& idx = blocks_[b];
    const Eigen::Index m = static_cast<Eigen::Index>(idx.size());
    if (!has_fast()) return DenseMat::Identity(m, m);
    Vec r(m);
    for (Eigen::Index i = 0; i < m; ++i) r(i) = std::polar(1.0, nu_ * t0 * charge_(idx[static_cast<std::size_t>(i)]));
    return r.asDiagonal() * u0[b] * r.conjugate().asDiagonal();
  }

  template <class F>
  void compose(DenseMat& rho, F&& block) {
    const Eigen::Index n = dim_;
    work_.resize(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const cplx* src = rho.col(order_[static_cast<std::size_t>(j)]).data();
      cplx* dst = work_.col(j).data();
      for (Eigen::Index i = 0; i < n; ++i) dst[i] = src[order_[static_cast<std::size_t>(i)]];
    }
    DenseMat w;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      block(b, w);
      w_[b] = w;
      const Eigen::Index off = offset_[b], m = w.rows();
      if (m == 1) {
        work_.middleRows(off, 1) *= w(0, 0);
      } else {
        panel_.noalias() = w * work_.middleRows(off, m);
        work_.middleRows(off, m) = panel_;
      }
    }
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      const Eigen::Index off = offset_[b], m = w_[b].rows();
      if (m == 1) {
        work_.middleCols(off, 1) *= std::conj(w_[b](0, 0));
      } else {
        panel_.noalias() = work_.middleCols(off, m) * w_[b].adjoint();
        work_.middleCols(off, m) = panel_;
      }
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      const cplx* src = work_.col(j).data();
      cplx* dst = rho.col(order_[static_cast<std::size_t>(j)]).data();
      for (Eigen::Index i = 0; i < n; ++i) dst[order_[static_cast<std::size_t>(i)]] = src[i];
    }
  }

  template <class F>
  void compose(Vec& psi, F&& block) {
    DenseMat w;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      block(b, w);
      const auto& idx = blocks_[b];
      const Eigen::Index m = w.rows();
      Vec x(m);
      for (Eigen::Index k = 0; k < m; ++k) x(k) = psi(idx[static_cast<std::size_t>(k)]);
      const Vec y = w * x;
      for (Eigen::Index k = 0; k < m; ++k) psi(idx[static_cast<std::size_t>(k)]) = y(k);
    }
  }

  void build_blocks() {
    std::vector<Eigen::Index> parent(static_cast<std::size_t>(dim_));
    std::iota(parent.begin(), parent.end(), Eigen::Index{0});
    auto find = [&](Eigen::Index i) {
      while (parent[static_cast<std::size_t>(i)] != i) {
        parent[static_cast<std::size_t>(i)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(i)])];
        i = parent[static_cast<std::size_t>(i)];
      }
      return i;
    };
    auto join = [&](const SparseMat& a) {
      for (int r = 0; r < a.outerSize(); ++r)
        for (SparseMat::InnerIterator it(a, r); it; ++it) {
          const auto x = find(r), y = find(it.col());
          if (x != y) parent[static_cast<std::size_t>(std::max(x, y))] = std::min(x, y);
        }
    };
    if (has_static()) join(h_);
    for (const auto& t : terms_) join(t.op.matrix());
    std::vector<Eigen::Index> root_block(static_cast<std::size_t>(dim_), -1);
    local_.assign(static_cast<std::size_t>(dim_), 0);
    for (Eigen::Index i = 0; i < dim_; ++i) {
      auto& rb = root_block[static_cast<std::size_t>(find(i))];
      if (rb < 0) {
        rb = static_cast<Eigen::Index>(blocks_.size());
        blocks_.emplace_back();
      }
      auto& blk = blocks_[static_cast<std::size_t>(rb)];
      local_[static_cast<std::size_t>(i)] = static_cast<Eigen::Index>(blk.size());
      blk.push_back(i);
    }
    for (const auto& b : blocks_) {
      offset_.push_back(static_cast<Eigen::Index>(order_.size()));
      order_.insert(order_.end(), b.begin(), b.end());
      largest_ = std::max(largest_, static_cast<Eigen::Index>(b.size()));
    }
    w_.resize(blocks_.size());
  }

  DenseMat evolve_block(const DenseMat& x, double s) const {
    const Eigen::Index m = x.rows();
    const double hn = x.cwiseAbs().rowwise().sum().maxCoeff() + x.cwiseAbs().colwise().sum().maxCoeff();
    DenseMat u = DenseMat::Identity(m, m);
    if (hn == 0.0) return u;
    const long n = std::max(1L, static_cast<long>(std::ceil((std::abs(nu_) + hn) * s / 0.02)));
    const double h = s / static_cast<double>(n);
    auto f = [&](double t, const DenseMat& y) -> DenseMat {
      const DenseMat c = std::polar(1.0, nu_ * t) * x;
      return -kI * ((c + c.adjoint()) * y);
    };
    for (long k = 0; k < n; ++k) {
      const double t = static_cast<double>(k) * h;
      DenseMat k1 = f(t, u);
      DenseMat k2 = f(t + h / 2, u + (h / 2) * k1);
      DenseMat k3 = f(t + h / 2, u + (h / 2) * k2);
      DenseMat k4 = f(t + h, u + h * k3);
      u += (h / 6) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return u;
  }

  std::vector<PhasedTerm> terms_;
  Eigen::Index dim_ = 0;
  SparseMat h_;
  double nu_ = 0.0;
  RealVec charge_;
  std::vector<std::vector<Eigen::Index>> blocks_;
  std::vector<Eigen::Index> local_;
  std::vector<Eigen::Index> order_;   // block-contiguous permutation
  std::vector<Eigen::Index> offset_;  // first permuted index of each block
  Eigen::Index largest_ = 0;
  std::vector<DenseMat> hh_, u_half_, u_full_, w_;
  double unitarity_error_ = 0.0;
  DenseMat work_, panel_;
};

inline void symmetrize(DenseMat& rho) {
  const Eigen::Index n = rho.rows();
  for (Eigen::Index j = 0; j < n; ++j) {
    rho(j, j) = rho(j, j).real();
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const cplx v = 0.5 * (rho(i, j) + std::conj(rho(j, i)));
      rho(i, j) = v;
      rho(j, i) = std::conj(v);
    }
  }
}

inline void symmetrize(Vec&) {}

inline double state_trace(const DenseMat& rho) { return rho.trace().real(); }
inline double state_trace(const Vec& psi) { return psi.squaredNorm(); }

/// Classic RK4 with the stage combinations fused into single passes.
template <class State, class Rhs>
struct Rk4 {
  State k, acc, tmp;

  void step(Rhs& f, double t, double h, State& y) {
    acc.resizeLike(y);
    tmp.resizeLike(y);
    const Eigen::Index n = y.size();
    cplx* pa = acc.data();
    cplx* pt = tmp.data();
    const cplx* py = y.data();
    f(t, y, k);
    const cplx* pk = k.data();
    for (Eigen::Index i = 0; i < n; ++i) {
      pa[i] = py[i] + (h / 6.0) * pk[i];
      pt[i] = py[i] + (h / 2.0) * pk[i];
    }
    f(t + h / 2.0, tmp, k);
    pk = k.data();
    for (Eigen::Index i = 0; i < n; ++i) {
      pa[i] += (h / 3.0) * pk[i];
      pt[i] = py[i] + (h / 2.0) * pk[i];
    }
    f(t + h / 2.0, tmp, k);
    pk = k.data();
    for (Eigen::Index i = 0; i < n; ++i) {
      pa[i] += (h / 3.0) * pk[i];
      pt[i] = py[i] + h * pk[i];
    }
    f(t + h, tmp, k);
    pk = k.data();
    for (Eigen::Index i = 0; i < n; ++i) pa[i] += (h / 6.0) * pk[i];
    y.swap(acc);
  }
};

/// Dormand-Prince 5(4) with first-same-as-last and Hairer's error norm.
template <class State, class Rhs>
struct Dopri5 {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;

  State k1, k2, k3, k4, k5, k6, k7, tmp, ynew, err;
  bool have_k1 = false;

  /// Attempts one step of size h; returns the scaled error norm (accept if <= 1).
  double attempt(Rhs& f, double t, double h, const State& y, double rtol, double atol) {
    if (!have_k1) {
      f(t, y, k1);
      have_k1 = true;
    }
    tmp = y + h * a21 * k1;
    f(t + c2 * h, tmp, k2);
    tmp = y + h * (a31 * k1 + a32 * k2);
    f(t + c3 * h, tmp, k3);
    tmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
    f(t + c4 * h, tmp, k4);
    tmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    f(t + c5 * h, tmp, k5);
    tmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    f(t + h, tmp, k6);
    ynew = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    f(t + h, ynew, k7);
    err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    const auto scale = (atol + rtol * y.cwiseAbs().cwiseMax(ynew.cwiseAbs()).array()).eval();
    const double n = static_cast<double>(y.size());
    return std::sqrt((err.cwiseAbs().array() / scale).square().sum() / n);
  }

  void accept(State& y) {
    y.swap(ynew);
    k1.swap(k7);
  }
};

/// Sample times for adaptive runs: the regular grid, the marks and the horizon.
inline std::vector<double> sample_grid(const SolverConfig& cfg, double horizon) {
  const double every = cfg.sample_interval > 0.0 ? cfg.sample_interval : horizon / 100.0;
  std::vector<double> ts{0.0};
  for (long k = 1;; ++k) {
    const double t = static_cast<double>(k) * every;
    if (t >= horizon * (1.0 - 1e-12)) break;
    ts.push_back(t);
  }
  for (double m : cfg.marks)
    if (m > 0.0 && m < horizon) ts.push_back(m);
  ts.push_back(horizon);
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end(), [&](double x, double y) { return std::abs(x - y) <= 1e-12 * horizon; }),
           ts.end());
  return ts;
}

inline std::vector<bool> checkpoint_mask(std::size_t samples, int requested) {
  std::vector<bool> mask(samples, false);
  const int k = std::min<int>({requested, 20, static_cast<int>(samples)});
  if (k <= 0) return mask;
  if (k == 1) {
    mask.back() = true;
    return mask;
  }
  for (int j = 0; j < k; ++j)
    mask[static_cast<std::size_t>(std::llround(static_cast<double>(j) * (samples - 1) / (k - 1)))] = true;
  return mask;
}

/// Integration driver shared by density matrices and kets.
template <class State>
class Driver {
 public:
  Driver(const Shape& shape, const Hamiltonian& h, const std::vector<LindbladChannel>& channels, SolverConfig cfg,
         double horizon, const Ket* ideal)
      : shape_(shape), cfg_(std::move(cfg)), horizon_(horizon), ideal_(ideal) {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ParameterError("horizon must be positive");
    if (cfg_.sample_every < 1) throw ParameterError("sample_every must be >= 1");
    if (cfg_.positivity_checks < 0 || cfg_.positivity_checks > 20)
      throw ParameterError("positivity_checks must be in [0, 20]");
    for (const auto& c : channels) {
      if (!(c.op.shape() == shape)) throw DimensionError("channel " + c.label + " acts on a different space");
      if (!(c.rate >= 0.0)) throw ParameterError("channel " + c.label + " has a negative rate");
    }
    if (!(h.shape() == shape)) throw DimensionError("Hamiltonian acts on a different space");

    method_ = cfg_.method;
    std::vector<PhasedTerm> slow, fast;
    const bool any_charged =
        std::any_of(h.terms().begin(), h.terms().end(), [](const PhasedTerm& t) { return t.charge.has_value(); });
    if (method_ == Method::automatic) {
      const bool uncharged = std::any_of(h.terms().begin(), h.terms().end(),
                                         [](const PhasedTerm& t) { return !t.charge.has_value(); });
      method_ = uncharged ? Method::dopri5 : (any_charged ? Method::split : Method::rk4);
    }
    for (const auto& t : h.terms()) (method_ == Method::split && t.charge ? fast : slow).push_back(t);
    slow_static_ = slow.empty();
    closed_ = channels.empty();
    // With a static slow part the Hamiltonian is propagated exactly and RK4
    // only carries the dissipator, unless the blocks are too large to pay off.
    if (method_ != Method::dopri5 && slow_static_) {
      block_ = std::make_unique<BlockPropagator>(&h.static_part().matrix(), fast, shape.dimension());
      if (block_->largest_block() > BlockPropagator::kMaxBlock) block_.reset();
    }
    if (block_) {
      rhs_ = std::make_unique<LindbladRhs>(SparseMat(shape.dimension(), shape.dimension()), slow, channels);
    } else {
      rhs_ = std::make_unique<LindbladRhs>(h.static_part().matrix(), slow, channels);
      block_ = std::make_unique<BlockPropagator>(nullptr, std::move(fast), shape.dimension());
    }

    slow_frequency_ = 0.0;
    for (const auto& t : slow) slow_frequency_ = std::max(slow_frequency_, std::abs(t.frequency));
    SparseMat g = h.static_part().matrix();
    for (const auto& t : slow) {
      g += SparseMat(std::abs(t.amplitude) * t.op.matrix());
      g += SparseMat(std::abs(t.amplitude) * SparseMat(t.op.matrix().adjoint()));
    }
    for (const auto& c : channels) g += SparseMat(c.rate * SparseMat(SparseMat(c.op.matrix().adjoint()) * c.op.matrix()));
    generator_norm_ = row_sum_norm(g);
  }

  Trajectory run(State y) {
    Trajectory tr;
    tr.diagnostics.method = method_;
    if (method_ == Method::dopri5) run_adaptive(y, tr);
    else run_fixed(y, tr);
    tr.diagnostics.rhs_evaluations = rhs_->evaluations();
    tr.diagnostics.unitarity_error = block_->unitarity_error();
    return tr;
  }

 private:
  double fixed_dt() const {
    if (cfg_.dt > 0.0) return cfg_.dt;
    // RK4 is stable to |lambda| dt ~ 2.8; the default sits far inside that for
    // accuracy and also resolves the fastest explicit slow phase.
    double dt = generator_norm_ > 0.0 ? 0.05 / generator_norm_ : horizon_ / 100.0;
    if (slow_frequency_ > 0.0) dt = std::min(dt, 1.0 / (50.0 * slow_frequency_));
    return std::min(dt, horizon_ / 10.0);
  }

  void record(double t, const State& y, bool check_positivity, Trajectory& tr) {
    const double trace = state_trace(y);
    const double terr = std::abs(trace - 1.0);
    tr.diagnostics.max_trace_error = std::max(tr.diagnostics.max_trace_error, terr);
    if (terr > cfg_.trace_tolerance)
      throw SolverError("trace drifted to " + std::to_string(trace) + " at t = " + std::to_string(t) +
                        " s (tolerance " + std::to_string(cfg_.trace_tolerance) + ")");
    if constexpr (std::is_same_v<State, DenseMat>) {
      DensityMatrix rho(shape_, y);
      tr.diagnostics.max_hermiticity_error = std::max(tr.diagnostics.max_hermiticity_error, rho.hermiticity_error());
      if (check_positivity) {
        tr.diagnostics.min_eigenvalue = std::min(tr.diagnostics.min_eigenvalue, rho.min_eigenvalue());
        ++tr.diagnostics.positivity_checked;
      }
      tr.samples.push_back(sample_metrics(t, rho, ideal_));
      if (cfg_.keep_snapshots) tr.snapshots.push_back(std::move(rho));
    } else {
      Ket psi(shape_, y);
      tr.samples.push_back(sample_metrics(t, psi, ideal_));
      if (cfg_.keep_snapshots) tr.ket_snapshots.push_back(std::move(psi));
    }
    tr.times.push_back(t);
  }

  void run_fixed(State& y, Trajectory& tr) {
    const double dt = fixed_dt();
    const long n = std::max(1L, static_cast<long>(std::ceil(horizon_ / dt * (1.0 - 1e-12))));
    tr.diagnostics.dt = dt;
    std::vector<bool> sample(static_cast<std::size_t>(n + 1), false);
    for (long i = 0; i <= n; i += cfg_.sample_every) sample[static_cast<std::size_t>(i)] = true;
    sample.back() = true;
    for (double m : cfg_.marks) {
      const long i = std::clamp(std::lround(m / dt), 0L, n);
      sample[static_cast<std::size_t>(i)] = true;
    }
    const auto count = static_cast<std::size_t>(std::count(sample.begin(), sample.end(), true));
    const auto checks = checkpoint_mask(count, cfg_.positivity_checks);
    std::size_t taken = 0;
    const bool exact = block_->has_fast() || block_->has_static();
    if (exact) block_->prepare(dt);
    Rk4<State, LindbladRhs> rk;
    const bool explicit_part = !(block_->has_static() && closed_);
    record(0.0, y, checks[taken++], tr);
    // Strang splitting around the explicit part; the closing half step of the
    // exact part merges with the next opening one unless a sample falls in
    // between
    bool open = false;
    for (long i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) * dt;
      if (exact && !open) block_->open(t, y);
      if (explicit_part) rk.step(*rhs_, t, dt, y);
      open = !sample[static_cast<std::size_t>(i + 1)] && i + 1 < n;
      if (exact) {
        if (open) block_->merged(t + dt / 2.0, y);
        else block_->close(t + dt / 2.0, y);
      }
      symmetrize(y);
      ++tr.diagnostics.steps;
      if (!y.allFinite()) throw SolverError("non-finite state at t = " + std::to_string(t + dt) + " s");
      if (sample[static_cast<std::size_t>(i + 1)]) record(static_cast<double>(i + 1) * dt, y, checks[taken++], tr);
    }
  }

  void run_adaptive(State& y, Trajectory& tr) {
    const auto grid = sample_grid(cfg_, horizon_);
    const auto checks = checkpoint_mask(grid.size(), cfg_.positivity_checks);
    Dopri5<State, LindbladRhs> dp;
    double t = 0.0;
    double h = initial_step(y);
    record(0.0, y, checks[0], tr);
    for (std::size_t s = 1; s < grid.size(); ++s) {
      const double target = grid[s];
      while (t < target) {
        bool last = false;
        if (cfg_.max_step > 0.0) h = std::min(h, cfg_.max_step);
        if (t + h >= target * (1.0 - 1e-14)) {
          h = target - t;
          last = true;
        }
        if (h < 1e-14 * std::max(horizon_, t))
          throw SolverError("step size underflow at t = " + std::to_string(t) + " s (h = " + std::to_string(h) +
                            "); the problem may be stiff or the tolerances too tight");
        const double e = dp.attempt(*rhs_, t, h, y, cfg_.rtol, cfg_.atol);
        if (!std::isfinite(e)) throw SolverError("non-finite error estimate at t = " + std::to_string(t) + " s");
        if (e <= 1.0) {
          dp.accept(y);
          symmetrize(y);
          t = last ? target : t + h;
          ++tr.diagnostics.steps;
          h *= std::min(5.0, std::max(0.2, 0.9 * std::pow(std::max(e, 1e-10), -0.2)));
        } else {
          ++tr.diagnostics.rejected;
          h *= std::max(0.2, 0.9 * std::pow(e, -0.2));
        }
      }
      record(target, y, checks[s], tr);
    }
  }

  double initial_step(const State& y) {
    State f0;
    (*rhs_)(0.0, y, f0);
    const double d0 = y.norm(), d1 = f0.norm();
    double h = (d0 > 1e-5 && d1 > 1e-5) ? 0.01 * d0 / d1 : 1e-6 * horizon_;
    if (slow_frequency_ > 0.0) h = std::min(h, 0.1 / slow_frequency_);
    return std::min(h, horizon_);
  }

  Shape shape_;
  SolverConfig cfg_;
  double horizon_;
  const Ket* ideal_;
  Method method_ = Method::automatic;
  std::unique_ptr<LindbladRhs> rhs_;
  std::unique_ptr<BlockPropagator> block_;
  double slow_frequency_ = 0.0;
  double generator_norm_ = 0.0;
  bool slow_static_ = false;
  bool closed_ = false;
};

}  // namespace detail

/// Integrates the master equation from rho0 over [0, >= horizon]. When
/// `ideal` is given the samples carry the fidelity against it.
inline Trajectory integrate(const DensityMatrix& rho0, const Hamiltonian& h, const std::vector<LindbladChannel>& channels,
                            const SolverConfig& cfg, double horizon, const Ket* ideal = nullptr) {
  if (std::abs(rho0.trace().real() - 1.0) > 1e-9 || rho0.hermiticity_error() > 1e-9)
    throw StateError("initial density matrix must be Hermitian with unit trace");
  detail::Driver<DenseMat> d(rho0.shape(), h, channels, cfg, horizon, ideal);
  return d.run(rho0.matrix());
}

/// Closed-system counterpart evolving a ket.
inline Trajectory integrate(const Ket& psi0, const Hamiltonian& h, const SolverConfig& cfg, double horizon,
                            const Ket* ideal = nullptr) {
  if (std::abs(psi0.norm() - 1.0) > 1e-9) throw StateError("initial ket must be normalized");
  detail::Driver<Vec> d(psi0.shape(), h, {}, cfg, horizon, ideal);
  return d.run(psi0.amplitudes());
}

enum class HamiltonianChoice { ideal, effective, full };

inline std::string_view name(HamiltonianChoice h) {
  switch (h) {
    case HamiltonianChoice::ideal: return "ideal";
    case HamiltonianChoice::effective: return "effective";
    case HamiltonianChoice::full: return "full";
  }
  return "?";
}

inline HamiltonianChoice parse_hamiltonian(std::string_view s) {
  if (s == "ideal") return HamiltonianChoice::ideal;
  if (s == "effective") return HamiltonianChoice::effective;
  if (s == "full") return HamiltonianChoice::full;
  throw ParameterError("unknown Hamiltonian '" + std::string(s) + "' (ideal, effective, full)");
}

struct OpenProtocolInput {
  Ket phi, phi_bar;
  cplx alpha = 1.0 / std::sqrt(2.0), beta = 1.0 / std::sqrt(2.0);
  PhysicalParams params;
  DecoherenceRates rates;
  bool crosstalk = false;
  HamiltonianChoice hamiltonian = HamiltonianChoice::effective;
  SolverConfig solver;
  double horizon = 0.0;      // 0 = t_swap
  int steps_per_swap = 0;    // fixed-step grid; 0 = smallest count with dt <= 1/(100 |omega|)
  bool reduce_coupler = true;  // drop e and f when the Hamiltonian never populates them
};

struct OpenProtocolResult {
  Trajectory trajectory;
  IdealParams ideal;
  double t_swap = 0.0;
  double fidelity_at_swap = 0.0;
  SystemDims dims;
  bool pure = false;
};

/// Runs the protocol under the chosen Hamiltonian (plus crosstalk) and the
/// given decoherence, sampling F(t) against the ideal pre-pulse state.
inline OpenProtocolResult simulate_protocol_open(const OpenProtocolInput& in) {
  detail::require_coefficients(in.alpha, in.beta);
  in.rates.validate();
  OpenProtocolResult out;
  const int n = static_cast<int>(std::max(in.phi.dimension(), in.phi_bar.dimension()));
  out.dims.n_a = out.dims.n_b = n;
  const bool reduced = in.reduce_coupler && in.hamiltonian != HamiltonianChoice::full;
  out.dims.coupler_levels = reduced ? std::vector<Level>{Level::g, Level::gp} : kAllLevels;

  // the ideal run uses the (omega, lambda) read off the effective form
  out.ideal = effective_ideal(in.params);
  out.t_swap = out.ideal.t_swap();

  Hamiltonian h(OperatorMatrix::zero(out.dims.shape()));
  switch (in.hamiltonian) {
    case HamiltonianChoice::ideal: h = Hamiltonian(build_ideal(out.ideal, out.dims)); break;
    case HamiltonianChoice::effective: h = Hamiltonian(build_effective(in.params, out.dims)); break;
    case HamiltonianChoice::full: h = full_hamiltonian(in.params, out.dims); break;
  }
  if (in.crosstalk) h = h + crosstalk_hamiltonian(in.params, out.dims);

  SolverConfig cfg = in.solver;
  const double horizon = in.horizon > 0.0 ? in.horizon : out.t_swap;
  cfg.marks.push_back(out.t_swap);
  if (cfg.method == Method::automatic)
    cfg.method = in.hamiltonian == HamiltonianChoice::full ? Method::dopri5 : (in.crosstalk ? Method::split : Method::rk4);
  if (cfg.method != Method::dopri5 && cfg.dt == 0.0) {
    long m = in.steps_per_swap;
    // dt <= 1/(100 |omega|) keeps the splitting error of the open runs below 1e-5 in F
    if (m <= 0) m = std::max(1L, static_cast<long>(std::ceil(out.t_swap * 100.0 * std::abs(out.ideal.omega))));
    cfg.dt = out.t_swap / static_cast<double>(m);
  }

  const Ket psi0 = product_state(resize_mode(in.phi, n), resize_mode(in.phi_bar, n), std::nullopt, CouplerState::superposition(in.alpha, in.beta),
                                 out.dims.coupler_levels);
  const Ket ideal = ideal_pre_pulse_state(in.phi, in.phi_bar, in.alpha, in.beta, out.dims);
  out.pure = in.rates.all_zero();
  if (out.pure) {
    out.trajectory = integrate(psi0, h, cfg, horizon, &ideal);
  } else {
    out.trajectory = integrate(DensityMatrix::from_ket(psi0), h, build_channels(in.rates, out.dims), cfg, horizon, &ideal);
  }
  out.fidelity_at_swap = out.trajectory.at(out.t_swap).fidelity;
  return out;
}

/// time_us, fidelity, trace, purity, pop_e, pop_f, pop_gprime at 12
/// significant digits.
inline void write_csv(std::ostream& os, const Trajectory& tr) {
  os << "time_us,fidelity,trace,purity,pop_e,pop_f,pop_gprime\n";
  char buf[256];
  for (const auto& s : tr.samples) {
    std::snprintf(buf, sizeof buf, "%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g\n", s.time * 1e6, s.fidelity, s.trace,
                  s.purity, s.populations[2], s.populations[3], s.populations[1]);
    os << buf;
  }
}

}  // namespace fockswap
