// SPDX-License-Identifier: Apache-2.0
#include "bsesprit/shift_invariance.hpp"

#include <numeric>
#include <utility>

#include "bsesprit/errors.hpp"
#include "bsesprit/kernels.hpp"

namespace bsesprit {

ShiftBasis shift_basis(const ComplexMatrix& t, double exact_tol, double rank_rtol) {
  if (t.rows() < 2 || t.cols() < 1) {
    throw Error(ErrorCode::invalid_input, "shift_basis: T needs at least two rows");
  }
  const Eigen::Index m = t.rows();
  const ComplexMatrix j1t = t.topRows(m - 1);
  const ComplexMatrix j2t = t.bottomRows(m - 1);

  ShiftBasis out;
  out.f = kernels::pinv(j2t, rank_rtol) * j1t;
  out.residual = (j1t - j2t * out.f).norm();
  const double scale = t.norm();
  out.exact = out.residual <= exact_tol * (scale > 0.0 ? scale : 1.0);
  if (!out.exact && kernels::numerical_rank(j2t, rank_rtol) < t.cols()) {
    throw Error(ErrorCode::needs_hybrid,
                "shift_basis: J2 T is rank deficient and no exact shift exists");
  }
  return out;
}

Projector projector_from_generators(const std::vector<ComplexVector>& gens, Eigen::Index n,
                                    double deflation_tol) {
  double scale = 0.0;
  for (const auto& g : gens) scale = std::max(scale, g.norm());
  std::vector<ComplexVector> basis;
  for (const auto& g : gens) {
    ComplexVector v = g;
    // Two MGS passes keep the basis orthonormal to working precision.
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& p : basis) v -= p * p.dot(v);
    }
    const double nv = v.norm();
    if (scale > 0.0 && nv > deflation_tol * scale) basis.push_back(v / nv);
  }
  Projector out;
  out.q = ComplexMatrix::Identity(n, n);
  for (const auto& p : basis) out.q -= p * p.adjoint();
  out.generators_kept = static_cast<int>(basis.size());
  return out;
}

Projector restore_projector(const ComplexMatrix& t, const ComplexMatrix& f, double deflation_tol) {
  const Eigen::Index n = t.cols();
  if (n < 3) {
    throw Error(ErrorCode::insufficient_beams, "restore_projector: need at least 3 beams");
  }
  if (f.rows() != n || f.cols() != n) {
    throw Error(ErrorCode::shape_mismatch, "restore_projector: F must be N x N");
  }
  // Columns of T^H are the conjugated rows of T.
  const ComplexVector t_last = t.row(t.rows() - 1).adjoint();
  const ComplexVector t_first = t.row(0).adjoint();
  const ComplexVector g2 = f.adjoint() * t_first;
  return projector_from_generators({t_last, g2}, n, deflation_tol);
}

SelectorPair restored_selectors(const ComplexMatrix& q, const ComplexMatrix& f) {
  return {q, q * f.adjoint()};
}

SelectorPair element_selectors(int m) {
  if (m < 2) throw Error(ErrorCode::invalid_input, "element_selectors: m < 2");
  SelectorPair out;
  out.first = ComplexMatrix::Zero(m - 1, m);
  out.second = ComplexMatrix::Zero(m - 1, m);
  for (int i = 0; i < m - 1; ++i) {
    out.first(i, i) = 1.0;
    out.second(i, i + 1) = 1.0;
  }
  return out;
}

LiftedSelector::LiftedSelector(int mode, std::vector<int> dims, ComplexMatrix s)
    : kind_(Kind::matrix), mode_(mode), dims_(std::move(dims)), s_(std::move(s)) {
  if (mode_ < 0 || mode_ >= static_cast<int>(dims_.size())) {
    throw Error(ErrorCode::invalid_input, "LiftedSelector: mode out of range");
  }
  if (s_.cols() != dims_[mode_]) {
    throw Error(ErrorCode::shape_mismatch, "LiftedSelector: selector width != mode size");
  }
  mode_out_ = s_.rows();
  init_extents();
}

LiftedSelector LiftedSelector::window(int mode, std::vector<int> dims, int offset) {
  LiftedSelector out;
  out.kind_ = Kind::window;
  out.mode_ = mode;
  out.offset_ = offset;
  out.dims_ = std::move(dims);
  if (mode < 0 || mode >= static_cast<int>(out.dims_.size()) || out.dims_[mode] < 2) {
    throw Error(ErrorCode::invalid_input, "LiftedSelector::window: bad mode");
  }
  if (offset != 0 && offset != 1) {
    throw Error(ErrorCode::invalid_input, "LiftedSelector::window: offset must be 0 or 1");
  }
  out.mode_out_ = out.dims_[mode] - 1;
  out.init_extents();
  return out;
}

void LiftedSelector::init_extents() {
  outer_ = 1;
  inner_ = 1;
  for (int k = 0; k < mode_; ++k) outer_ *= dims_[k];
  for (int k = mode_ + 1; k < static_cast<int>(dims_.size()); ++k) inner_ *= dims_[k];
  mode_in_ = dims_[mode_];
  rows_ = outer_ * mode_out_ * inner_;
  cols_ = outer_ * mode_in_ * inner_;
}

// Row-major index (o, j, i) -> (o * d + j) * inner + i, so each outer slab is an
// inner x d column-major block.
ComplexMatrix LiftedSelector::apply(const ComplexMatrix& x) const {
  if (x.rows() != cols_) {
    throw Error(ErrorCode::shape_mismatch, "LiftedSelector::apply: row count mismatch");
  }
  ComplexMatrix y(rows_, x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    Eigen::Map<const ComplexMatrix> xin(x.col(c).data(), inner_, mode_in_ * outer_);
    Eigen::Map<ComplexMatrix> yout(y.col(c).data(), inner_, mode_out_ * outer_);
    for (Eigen::Index o = 0; o < outer_; ++o) {
      if (kind_ == Kind::window) {
        yout.middleCols(o * mode_out_, mode_out_) =
            xin.middleCols(o * mode_in_ + offset_, mode_out_);
      } else {
        yout.middleCols(o * mode_out_, mode_out_).noalias() =
            xin.middleCols(o * mode_in_, mode_in_) * s_.transpose();
      }
    }
  }
  return y;
}

ComplexMatrix LiftedSelector::apply_adjoint(const ComplexMatrix& y) const {
  if (y.rows() != rows_) {
    throw Error(ErrorCode::shape_mismatch, "LiftedSelector::apply_adjoint: row count mismatch");
  }
  ComplexMatrix x = ComplexMatrix::Zero(cols_, y.cols());
  for (Eigen::Index c = 0; c < y.cols(); ++c) {
    Eigen::Map<const ComplexMatrix> yin(y.col(c).data(), inner_, mode_out_ * outer_);
    Eigen::Map<ComplexMatrix> xout(x.col(c).data(), inner_, mode_in_ * outer_);
    for (Eigen::Index o = 0; o < outer_; ++o) {
      if (kind_ == Kind::window) {
        xout.middleCols(o * mode_in_ + offset_, mode_out_) =
            yin.middleCols(o * mode_out_, mode_out_);
      } else {
        xout.middleCols(o * mode_in_, mode_in_).noalias() =
            yin.middleCols(o * mode_out_, mode_out_) * s_.conjugate();
      }
    }
  }
  return x;
}

ComplexMatrix LiftedSelector::dense() const {
  return apply(ComplexMatrix::Identity(cols_, cols_));
}

LiftedPair lifted_selectors(int n, const std::vector<int>& dims,
                            const std::vector<SelectorPair>& per_dim) {
  const int modes = static_cast<int>(dims.size());
  if (n < 1 || n > modes) {
    throw Error(ErrorCode::invalid_input, "lifted_selectors: dimension index out of range");
  }
  if (n == modes) {
    return {LiftedSelector::window(n - 1, dims, 0), LiftedSelector::window(n - 1, dims, 1)};
  }
  if (static_cast<int>(per_dim.size()) < n) {
    throw Error(ErrorCode::invalid_input, "lifted_selectors: missing per-dimension selectors");
  }
  const SelectorPair& sp = per_dim[static_cast<std::size_t>(n - 1)];
  return {LiftedSelector(n - 1, dims, sp.first), LiftedSelector(n - 1, dims, sp.second)};
}

}  // namespace bsesprit
