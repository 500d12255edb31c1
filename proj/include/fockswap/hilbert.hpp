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

// Truncated tensor-product Hilbert spaces.
//
// Every composite space is an ordered list of factors drawn from
// (a, b, c, coupler). The ordering is global and fixed; the last factor
// varies fastest in the flattened (row-major) index. A standalone oscillator
// uses the `mode` tag until it is placed into a composite space.
//
// The coupler factor may be restricted to a subset of its four levels
// (g, g', e, f). Operators lifted into such a space are projected onto the
// retained levels, and lifting refuses any operator that would move
// amplitude from a retained level to a dropped one.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "fockswap/core.hpp"

namespace fockswap {

enum class Subsystem : std::uint8_t { a = 0, b = 1, c = 2, coupler = 3, mode = 4 };

/// Coupler levels; the numeric value is the physical level index.
enum class Level : std::uint8_t { g = 0, gp = 1, e = 2, f = 3 };

inline constexpr int kCouplerLevels = 4;
inline const std::vector<Level> kAllLevels{Level::g, Level::gp, Level::e, Level::f};

inline std::string_view name(Subsystem s) {
  switch (s) {
    case Subsystem::a: return "a";
    case Subsystem::b: return "b";
    case Subsystem::c: return "c";
    case Subsystem::coupler: return "coupler";
    case Subsystem::mode: return "mode";
  }
  return "?";
}

inline std::string_view name(Level l) {
  switch (l) {
    case Level::g: return "g";
    case Level::gp: return "g'";
    case Level::e: return "e";
    case Level::f: return "f";
  }
  return "?";
}

struct Factor {
  Subsystem id;
  int dim;
  bool operator==(const Factor&) const = default;
};

class Shape {
 public:
  Shape() = default;

  explicit Shape(std::vector<Factor> factors, std::vector<Level> coupler_levels = {})
      : factors_(std::move(factors)), levels_(std::move(coupler_levels)) {
    for (std::size_t i = 0; i < factors_.size(); ++i) {
      if (factors_[i].dim < 1) throw DimensionError("factor dimension must be positive");
      if (i > 0 && factors_[i - 1].id >= factors_[i].id)
        throw DimensionError("factors must be distinct and ordered (a, b, c, coupler)");
    }
    auto pos = position(Subsystem::coupler);
    if (pos) {
      if (levels_.empty()) {
        if (factors_[*pos].dim != kCouplerLevels)
          throw DimensionError("coupler factor without explicit levels must have 4 levels");
        levels_ = kAllLevels;
      }
      if (!std::is_sorted(levels_.begin(), levels_.end()) ||
          std::adjacent_find(levels_.begin(), levels_.end()) != levels_.end())
        throw DimensionError("coupler levels must be sorted and unique");
      if (static_cast<int>(levels_.size()) != factors_[*pos].dim)
        throw DimensionError("coupler factor dimension must match its level list");
    } else if (!levels_.empty()) {
      throw DimensionError("coupler levels given without a coupler factor");
    }
  }

  static Shape mode(int n) { return Shape({{Subsystem::mode, n}}); }

  static Shape coupler(std::vector<Level> levels = kAllLevels) {
    const int n = static_cast<int>(levels.size());
    return Shape({{Subsystem::coupler, n}}, std::move(levels));
  }

  const std::vector<Factor>& factors() const { return factors_; }
  const std::vector<Level>& coupler_levels() const { return levels_; }

  int dimension() const {
    int d = 1;
    for (const auto& f : factors_) d *= f.dim;
    return factors_.empty() ? 0 : d;
  }

  std::optional<std::size_t> position(Subsystem s) const {
    for (std::size_t i = 0; i < factors_.size(); ++i)
      if (factors_[i].id == s) return i;
    return std::nullopt;
  }

  bool has(Subsystem s) const { return position(s).has_value(); }

  int dim_of(Subsystem s) const {
    auto p = position(s);
    if (!p) throw DimensionError("shape has no factor " + std::string(name(s)));
    return factors_[*p].dim;
  }

  /// Local index of a coupler level inside this shape, if retained.
  std::optional<int> coupler_index(Level l) const {
    auto it = std::find(levels_.begin(), levels_.end(), l);
    if (it == levels_.end()) return std::nullopt;
    return static_cast<int>(it - levels_.begin());
  }

  /// Product of the dimensions of the factors after position `p`.
  int stride(std::size_t p) const {
    int s = 1;
    for (std::size_t i = p + 1; i < factors_.size(); ++i) s *= factors_[i].dim;
    return s;
  }

  Shape subshape(std::span<const Subsystem> keep) const {
    std::vector<Factor> out;
    std::vector<Level> levels;
    for (const auto& f : factors_) {
      if (std::find(keep.begin(), keep.end(), f.id) == keep.end()) continue;
      out.push_back(f);
      if (f.id == Subsystem::coupler) levels = levels_;
    }
    return Shape(std::move(out), std::move(levels));
  }

  std::string describe() const {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < factors_.size(); ++i)
      os << (i ? ", " : "") << name(factors_[i].id) << ":" << factors_[i].dim;
    os << ")";
    return os.str();
  }

  bool operator==(const Shape&) const = default;

 private:
  std::vector<Factor> factors_;
  std::vector<Level> levels_;
};

/// Truncation sizes of the physical system. The coupler always has four
/// physical levels; `coupler_levels` selects which of them are represented.
struct SystemDims {
  int n_a = 2;
  int n_b = 2;
  int n_c = 0;  // 0 = oscillator c absent
  std::vector<Level> coupler_levels = kAllLevels;

  static constexpr int n_q = kCouplerLevels;

  void validate() const {
    if (n_a < 2 || n_b < 2) throw DimensionError("oscillator truncations must be >= 2");
    if (n_c != 0 && n_c != 2) throw DimensionError("oscillator c truncation must be 0 or 2");
    if (coupler_levels.empty()) throw DimensionError("at least one coupler level is required");
  }

  bool full_coupler() const { return coupler_levels.size() == kAllLevels.size(); }

  Shape shape() const {
    validate();
    std::vector<Factor> f{{Subsystem::a, n_a}, {Subsystem::b, n_b}};
    if (n_c > 0) f.push_back({Subsystem::c, n_c});
    f.push_back({Subsystem::coupler, static_cast<int>(coupler_levels.size())});
    return Shape(std::move(f), coupler_levels);
  }

  int dimension() const { return shape().dimension(); }

  bool operator==(const SystemDims&) const = default;
};

/// Flat index of a basis state given per-factor indices (in factor order).
inline Eigen::Index flat_index(const Shape& shape, std::span<const int> digits) {
  const auto& fs = shape.factors();
  if (digits.size() != fs.size()) throw DimensionError("basis index has wrong arity");
  Eigen::Index idx = 0;
  for (std::size_t i = 0; i < fs.size(); ++i) {
    if (digits[i] < 0 || digits[i] >= fs[i].dim) throw DimensionError("basis index out of range");
    idx = idx * fs[i].dim + digits[i];
  }
  return idx;
}

inline std::vector<int> digits_of(const Shape& shape, Eigen::Index idx) {
  const auto& fs = shape.factors();
  std::vector<int> d(fs.size());
  for (std::size_t i = fs.size(); i-- > 0;) {
    d[i] = static_cast<int>(idx % fs[i].dim);
    idx /= fs[i].dim;
  }
  return d;
}

class Ket {
 public:
  Ket() = default;
  Ket(Shape shape, Vec amplitudes, double tail_mass = 0.0)
      : shape_(std::move(shape)), amps_(std::move(amplitudes)), tail_mass_(tail_mass) {
    if (amps_.size() != shape_.dimension())
      throw DimensionError("ket length " + std::to_string(amps_.size()) +
                           " does not match shape " + shape_.describe());
  }

  static Ket basis(const Shape& shape, std::span<const int> digits) {
    Vec v = Vec::Zero(shape.dimension());
    v(flat_index(shape, digits)) = 1.0;
    return Ket(shape, std::move(v));
  }

  const Shape& shape() const { return shape_; }
  const Vec& amplitudes() const { return amps_; }
  Eigen::Index dimension() const { return amps_.size(); }
  cplx operator[](Eigen::Index i) const { return amps_(i); }
  double norm() const { return amps_.norm(); }
  /// Probability weight lost to truncation when the state was built.
  double tail_mass() const { return tail_mass_; }

  Ket normalized() const {
    const double n = norm();
    if (!(n > 0.0)) throw StateError("cannot normalize a zero vector");
    return Ket(shape_, amps_ / n, tail_mass_);
  }

  Ket scaled(cplx s) const { return Ket(shape_, amps_ * s, tail_mass_); }

 private:
  Shape shape_;
  Vec amps_;
  double tail_mass_ = 0.0;
};

class DensityMatrix {
 public:
  DensityMatrix() = default;
  DensityMatrix(Shape shape, DenseMat m) : shape_(std::move(shape)), m_(std::move(m)) {
    if (m_.rows() != shape_.dimension() || m_.cols() != shape_.dimension())
      throw DimensionError("density matrix size does not match shape " + shape_.describe());
  }

  static DensityMatrix from_ket(const Ket& psi) {
    return DensityMatrix(psi.shape(), psi.amplitudes() * psi.amplitudes().adjoint());
  }

  const Shape& shape() const { return shape_; }
  const DenseMat& matrix() const { return m_; }
  Eigen::Index dimension() const { return m_.rows(); }

  cplx trace() const { return m_.trace(); }

  double hermiticity_error() const { return (m_ - m_.adjoint()).cwiseAbs().maxCoeff(); }

  /// Smallest eigenvalue of the Hermitian part. O(d^3).
  double min_eigenvalue() const {
    DenseMat h = 0.5 * (m_ + m_.adjoint());
    Eigen::SelfAdjointEigenSolver<DenseMat> es(h, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
  }

 private:
  Shape shape_;
  DenseMat m_;
};

inline double max_abs(const SparseMat& m) {
  double r = 0.0;
  for (int k = 0; k < m.outerSize(); ++k)
    for (SparseMat::InnerIterator it(m, k); it; ++it) r = std::max(r, std::abs(it.value()));
  return r;
}

class OperatorMatrix {
 public:
  OperatorMatrix() = default;

  /// With `hermitian` set the matrix is checked against its adjoint to
  /// 1e-12 relative to its largest entry.
  OperatorMatrix(Shape shape, SparseMat m, bool hermitian = false)
      : shape_(std::move(shape)), m_(std::move(m)), hermitian_(hermitian) {
    if (m_.rows() != shape_.dimension() || m_.cols() != shape_.dimension())
      throw DimensionError("operator size does not match shape " + shape_.describe());
    m_.makeCompressed();
    if (hermitian_ && hermiticity_error() > 1e-12 * std::max(1.0, max_abs(m_)))
      throw DimensionError("operator flagged Hermitian is not Hermitian");
  }

  static OperatorMatrix zero(const Shape& shape) {
    SparseMat z(shape.dimension(), shape.dimension());
    return OperatorMatrix(shape, std::move(z), true);
  }

  static OperatorMatrix identity(const Shape& shape) {
    SparseMat m(shape.dimension(), shape.dimension());
    m.setIdentity();
    return OperatorMatrix(shape, std::move(m), true);
  }

  const Shape& shape() const { return shape_; }
  const SparseMat& matrix() const { return m_; }
  bool is_hermitian() const { return hermitian_; }
  Eigen::Index dimension() const { return m_.rows(); }
  Eigen::Index nnz() const { return m_.nonZeros(); }

  double hermiticity_error() const {
    SparseMat d = m_ - SparseMat(m_.adjoint());
    return max_abs(d);
  }

  OperatorMatrix adjoint() const { return OperatorMatrix(shape_, SparseMat(m_.adjoint()), hermitian_); }

  DenseMat dense() const { return DenseMat(m_); }

  friend OperatorMatrix operator+(const OperatorMatrix& x, const OperatorMatrix& y) {
    x.require_same(y);
    return OperatorMatrix(x.shape_, SparseMat(x.m_ + y.m_), x.hermitian_ && y.hermitian_);
  }
  friend OperatorMatrix operator-(const OperatorMatrix& x, const OperatorMatrix& y) {
    x.require_same(y);
    return OperatorMatrix(x.shape_, SparseMat(x.m_ - y.m_), x.hermitian_ && y.hermitian_);
  }
  friend OperatorMatrix operator*(const OperatorMatrix& x, const OperatorMatrix& y) {
    x.require_same(y);
    return OperatorMatrix(x.shape_, SparseMat(x.m_ * y.m_), false);
  }
  friend OperatorMatrix operator*(double s, const OperatorMatrix& x) {
    return OperatorMatrix(x.shape_, SparseMat(s * x.m_), x.hermitian_);
  }
  friend OperatorMatrix operator*(cplx s, const OperatorMatrix& x) {
    return OperatorMatrix(x.shape_, SparseMat(s * x.m_), x.hermitian_ && s.imag() == 0.0);
  }

  /// Marks the operator Hermitian after verifying it.
  OperatorMatrix as_hermitian() const { return OperatorMatrix(shape_, m_, true); }

 private:
  void require_same(const OperatorMatrix& o) const {
    if (!(shape_ == o.shape_))
      throw DimensionError("operator shapes differ: " + shape_.describe() + " vs " + o.shape_.describe());
  }

  Shape shape_;
  SparseMat m_;
  bool hermitian_ = false;
};

inline OperatorMatrix commutator(const OperatorMatrix& x, const OperatorMatrix& y) {
  return x * y - y * x;
}

// ---------------------------------------------------------------------------
// Single-factor operators

inline OperatorMatrix annihilation(int n) {
  if (n < 2) throw DimensionError("annihilation operator needs truncation >= 2");
  std::vector<Eigen::Triplet<cplx>> t;
  for (int m = 1; m < n; ++m) t.emplace_back(m - 1, m, std::sqrt(static_cast<double>(m)));
  SparseMat a(n, n);
  a.setFromTriplets(t.begin(), t.end());
  return OperatorMatrix(Shape::mode(n), std::move(a));
}

inline OperatorMatrix creation(int n) { return annihilation(n).adjoint(); }

inline OperatorMatrix number_operator(int n) {
  if (n < 1) throw DimensionError("truncation must be positive");
  std::vector<Eigen::Triplet<cplx>> t;
  for (int m = 1; m < n; ++m) t.emplace_back(m, m, static_cast<double>(m));
  SparseMat a(n, n);
  a.setFromTriplets(t.begin(), t.end());
  return OperatorMatrix(Shape::mode(n), std::move(a), true);
}

/// |to><from| on the four-level coupler.
inline OperatorMatrix coupler_transition(Level to, Level from) {
  SparseMat m(kCouplerLevels, kCouplerLevels);
  m.insert(static_cast<int>(to), static_cast<int>(from)) = 1.0;
  return OperatorMatrix(Shape::coupler(), std::move(m), to == from);
}

inline OperatorMatrix coupler_projector(Level l) { return coupler_transition(l, l); }

// ---------------------------------------------------------------------------
// Embedding

/// Embeds a single-factor operator into `target`, acting as identity on all
/// other factors. Oscillator operators (tagged `mode` or with the matching
/// id) must match the target truncation. Coupler operators are given on all
/// four levels and are projected onto the levels retained by `target`.
inline OperatorMatrix lift(const OperatorMatrix& op, Subsystem where, const Shape& target) {
  const auto& of = op.shape().factors();
  if (of.size() != 1) throw DimensionError("lift expects a single-factor operator");
  if (where == Subsystem::mode) throw DimensionError("cannot lift into the untagged mode factor");
  if (of[0].id != Subsystem::mode && of[0].id != where)
    throw DimensionError("operator is tagged " + std::string(name(of[0].id)) + ", not " +
                         std::string(name(where)));
  auto pos = target.position(where);
  if (!pos) throw DimensionError("target shape has no factor " + std::string(name(where)));

  SparseMat local = op.matrix();
  const int n = target.factors()[*pos].dim;
  if (where == Subsystem::coupler) {
    if (local.rows() != kCouplerLevels)
      throw DimensionError("coupler operators must be given on all four levels");
    const auto& levels = target.coupler_levels();
    if (static_cast<int>(levels.size()) != kCouplerLevels) {
      std::array<int, kCouplerLevels> map{};
      map.fill(-1);
      for (std::size_t i = 0; i < levels.size(); ++i) map[static_cast<int>(levels[i])] = static_cast<int>(i);
      std::vector<Eigen::Triplet<cplx>> t;
      for (int r = 0; r < local.outerSize(); ++r)
        for (SparseMat::InnerIterator it(local, r); it; ++it) {
          const int row = static_cast<int>(it.row()), col = static_cast<int>(it.col());
          if (map[col] < 0) continue;
          if (map[row] < 0) {
            if (it.value() != cplx{0.0})
              throw DimensionError("operator couples a retained coupler level to a dropped one");
            continue;
          }
          t.emplace_back(map[row], map[col], it.value());
        }
      local = SparseMat(n, n);
      local.setFromTriplets(t.begin(), t.end());
    }
  } else if (local.rows() != n) {
    throw DimensionError("operator dimension " + std::to_string(local.rows()) +
                         " does not match factor " + std::string(name(where)) + ":" + std::to_string(n));
  }

  int left = 1;
  for (std::size_t i = 0; i < *pos; ++i) left *= target.factors()[i].dim;
  const int right = target.stride(*pos);
  std::vector<Eigen::Triplet<cplx>> t;
  t.reserve(static_cast<std::size_t>(local.nonZeros()) * left * right);
  for (int l = 0; l < left; ++l)
    for (int r0 = 0; r0 < local.outerSize(); ++r0)
      for (SparseMat::InnerIterator it(local, r0); it; ++it)
        for (int r = 0; r < right; ++r) {
          const auto row = (static_cast<Eigen::Index>(l) * n + it.row()) * right + r;
          const auto col = (static_cast<Eigen::Index>(l) * n + it.col()) * right + r;
          t.emplace_back(row, col, it.value());
        }
  SparseMat full(target.dimension(), target.dimension());
  full.setFromTriplets(t.begin(), t.end());
  return OperatorMatrix(target, std::move(full), op.is_hermitian());
}

/// Relabels a single-factor ket as subsystem `id`.
inline Ket as_subsystem(const Ket& k, Subsystem id) {
  const auto& f = k.shape().factors();
  if (f.size() != 1) throw DimensionError("relabeling needs a single-factor ket");
  std::vector<Level> levels;
  if (id == Subsystem::coupler) levels = f[0].id == Subsystem::coupler ? k.shape().coupler_levels() : kAllLevels;
  return Ket(Shape({{id, f[0].dim}}, levels), k.amplitudes(), k.tail_mass());
}

/// Tensor product of kets on disjoint, ordered factors.
inline Ket tensor(std::span<const Ket> parts) {
  if (parts.empty()) throw DimensionError("empty tensor product");
  std::vector<Factor> factors;
  std::vector<Level> levels;
  Vec v = Vec::Ones(1);
  double keep = 1.0;
  for (const auto& p : parts) {
    for (const auto& f : p.shape().factors()) factors.push_back(f);
    if (p.shape().has(Subsystem::coupler)) levels = p.shape().coupler_levels();
    Vec next(v.size() * p.dimension());
    for (Eigen::Index i = 0; i < v.size(); ++i)
      next.segment(i * p.dimension(), p.dimension()) = v(i) * p.amplitudes();
    v = std::move(next);
    keep *= 1.0 - p.tail_mass();
  }
  Shape s(std::move(factors), std::move(levels));
  return Ket(std::move(s), std::move(v), 1.0 - keep);
}

inline Ket tensor(std::initializer_list<Ket> parts) {
  std::vector<Ket> v(parts);
  return tensor(std::span<const Ket>(v));
}

// ---------------------------------------------------------------------------
// Linear algebra kernels

inline cplx inner(const Ket& psi, const Ket& phi) {
  if (!(psi.shape() == phi.shape()))
    throw DimensionError("inner product of kets on different shapes " + psi.shape().describe() + " vs " +
                         phi.shape().describe());
  return psi.amplitudes().dot(phi.amplitudes());
}

inline Ket apply(const OperatorMatrix& op, const Ket& psi) {
  if (!(op.shape() == psi.shape())) throw DimensionError("operator and ket shapes differ");
  return Ket(psi.shape(), op.matrix() * psi.amplitudes(), psi.tail_mass());
}

namespace detail {

/// Largest absolute row sum.
inline double row_sum_norm(const SparseMat& m) {
  double n = 0.0;
  for (int r = 0; r < m.outerSize(); ++r) {
    double s = 0.0;
    for (SparseMat::InnerIterator it(m, r); it; ++it) s += std::abs(it.value());
    n = std::max(n, s);
  }
  return n;
}

/// v <- e^{-iHt} v with ceil(norm1 |t|) Taylor substeps, each summed until
/// the next term drops below machine precision. v may hold several columns.
template <class M>
inline void taylor_apply(const SparseMat& h, M& v, double t, double norm1) {
  const double span = norm1 * std::abs(t);
  if (span == 0.0) return;
  const long steps = std::max(1L, static_cast<long>(std::ceil(span)));
  const cplx factor = -kI * (t / static_cast<double>(steps));
  M term(v.rows(), v.cols()), acc(v.rows(), v.cols());
  for (long s = 0; s < steps; ++s) {
    term = v;
    acc = v;
    const double vn = v.norm();
    for (int k = 1; k < 80; ++k) {
      term = (factor / static_cast<double>(k)) * (h * term);
      acc += term;
      if (term.norm() <= 1e-17 * vn) break;
    }
    v.swap(acc);
  }
}

}  // namespace detail

/// e^{-iHt} psi by a scaled Taylor series. Each substep has ||H||_1 |dt| <= 1
/// and the series is summed until the next term is below machine precision,
/// so the result is accurate to ~1e-14 relative per substep.
inline Ket expm_apply(const OperatorMatrix& h, const Ket& psi, double t) {
  if (!(h.shape() == psi.shape())) throw DimensionError("Hamiltonian and ket shapes differ");
  if (!std::isfinite(t)) throw Error("propagation time must be finite");
  if (!h.is_hermitian() && h.hermiticity_error() > 1e-12 * std::max(1.0, max_abs(h.matrix())))
    throw DimensionError("expm_apply requires a Hermitian generator");
  Vec v = psi.amplitudes();
  detail::taylor_apply(h.matrix(), v, t, detail::row_sum_norm(h.matrix()));
  return Ket(psi.shape(), std::move(v), psi.tail_mass());
}

/// Reduced density matrix on the factors listed in `keep`.
inline DensityMatrix partial_trace(const DensityMatrix& rho, std::span<const Subsystem> keep) {
  if (keep.empty()) throw DimensionError("partial trace needs a non-empty set of kept factors");
  const Shape& shape = rho.shape();
  for (auto s : keep)
    if (!shape.has(s)) throw DimensionError("cannot keep absent factor " + std::string(name(s)));
  Shape kept = shape.subshape(keep);
  const auto& fs = shape.factors();
  std::vector<bool> is_kept(fs.size());
  int dk = 1, dt = 1;
  for (std::size_t i = 0; i < fs.size(); ++i) {
    is_kept[i] = std::find(keep.begin(), keep.end(), fs[i].id) != keep.end();
    (is_kept[i] ? dk : dt) *= fs[i].dim;
  }
  // full index for every (kept, traced) pair
  std::vector<Eigen::Index> full(static_cast<std::size_t>(dk) * dt);
  for (Eigen::Index idx = 0; idx < shape.dimension(); ++idx) {
    auto d = digits_of(shape, idx);
    Eigen::Index ki = 0, ti = 0;
    for (std::size_t i = 0; i < fs.size(); ++i) {
      if (is_kept[i]) ki = ki * fs[i].dim + d[i];
      else ti = ti * fs[i].dim + d[i];
    }
    full[static_cast<std::size_t>(ti) * dk + ki] = idx;
  }
  const DenseMat& m = rho.matrix();
  DenseMat out = DenseMat::Zero(dk, dk);
  for (int r = 0; r < dt; ++r) {
    const Eigen::Index* base = &full[static_cast<std::size_t>(r) * dk];
    for (int j = 0; j < dk; ++j)
      for (int i = 0; i < dk; ++i) out(i, j) += m(base[i], base[j]);
  }
  return DensityMatrix(std::move(kept), std::move(out));
}

inline DensityMatrix partial_trace(const DensityMatrix& rho, std::initializer_list<Subsystem> keep) {
  std::vector<Subsystem> k(keep);
  return partial_trace(rho, std::span<const Subsystem>(k));
}

inline DensityMatrix partial_trace(const Ket& psi, std::span<const Subsystem> keep) {
  // Work from the Schmidt matrix instead of the full outer product.
  if (keep.empty()) throw DimensionError("partial trace needs a non-empty set of kept factors");
  const Shape& shape = psi.shape();
  for (auto s : keep)
    if (!shape.has(s)) throw DimensionError("cannot keep absent factor " + std::string(name(s)));
  const auto& fs = shape.factors();
  std::vector<bool> is_kept(fs.size());
  int dk = 1, dt = 1;
  for (std::size_t i = 0; i < fs.size(); ++i) {
    is_kept[i] = std::find(keep.begin(), keep.end(), fs[i].id) != keep.end();
    (is_kept[i] ? dk : dt) *= fs[i].dim;
  }
  DenseMat schmidt = DenseMat::Zero(dk, dt);
  for (Eigen::Index idx = 0; idx < shape.dimension(); ++idx) {
    auto d = digits_of(shape, idx);
    Eigen::Index ki = 0, ti = 0;
    for (std::size_t i = 0; i < fs.size(); ++i) {
      if (is_kept[i]) ki = ki * fs[i].dim + d[i];
      else ti = ti * fs[i].dim + d[i];
    }
    schmidt(ki, ti) = psi[idx];
  }
  return DensityMatrix(shape.subshape(keep), schmidt * schmidt.adjoint());
}

inline DensityMatrix partial_trace(const Ket& psi, std::initializer_list<Subsystem> keep) {
  std::vector<Subsystem> k(keep);
  return partial_trace(psi, std::span<const Subsystem>(k));
}

}  // namespace fockswap
