// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <vector>

#include "bsesprit/types.hpp"

namespace bsesprit {

struct ShiftBasis {
  ComplexMatrix f;
  bool exact = false;
  double residual = 0.0;  // ||J1 T - J2 T F||_F
};

// Per-dimension selector pair (L_{n,1}, L_{n,2}).
struct SelectorPair {
  ComplexMatrix first;
  ComplexMatrix second;
};

struct Projector {
  ComplexMatrix q;
  int generators_kept = 0;  // 2 generically, 1 for a collinear pair
};

// F with J1 T = J2 T F. Exact when the residual is below exact_tol * ||T||_F.
ShiftBasis shift_basis(const ComplexMatrix& t, double exact_tol = 1e-10,
                       double rank_rtol = 1e-10);

Projector restore_projector(const ComplexMatrix& t, const ComplexMatrix& f,
                            double deflation_tol = 1e-12);

// I minus the projector onto the MGS-orthonormalized generators; near-dependent
// generators (relative norm below deflation_tol after deflation) are dropped.
Projector projector_from_generators(const std::vector<ComplexVector>& gens, Eigen::Index n,
                                    double deflation_tol = 1e-12);

// L1 = Q, L2 = Q F^H.
SelectorPair restored_selectors(const ComplexMatrix& q, const ComplexMatrix& f);

// Plain element-space selectors [I 0] and [0 I] of shape (m-1) x m.
SelectorPair element_selectors(int m);

// One Kronecker-lifted selector I ⊗ ... ⊗ S ⊗ ... ⊗ I acting on a row-major
// multi-index vector. Applied through index maps; dense() exists for testing.
class LiftedSelector {
 public:
  enum class Kind { matrix, window };

  // Selector acting with matrix s (rows x dims[mode]) on one mode.
  LiftedSelector(int mode, std::vector<int> dims, ComplexMatrix s);
  // Window selector keeping dims[mode]-1 consecutive entries starting at offset 0 or 1.
  static LiftedSelector window(int mode, std::vector<int> dims, int offset);

  Eigen::Index rows() const noexcept { return rows_; }
  Eigen::Index cols() const noexcept { return cols_; }
  int mode() const noexcept { return mode_; }
  Kind kind() const noexcept { return kind_; }

  ComplexMatrix apply(const ComplexMatrix& x) const;
  ComplexMatrix apply_adjoint(const ComplexMatrix& y) const;
  ComplexMatrix dense() const;

 private:
  LiftedSelector() = default;
  void init_extents();

  Kind kind_ = Kind::matrix;
  int mode_ = 0;
  int offset_ = 0;
  std::vector<int> dims_;
  ComplexMatrix s_;
  Eigen::Index outer_ = 1, inner_ = 1, mode_in_ = 1, mode_out_ = 1;
  Eigen::Index rows_ = 0, cols_ = 0;
};

struct LiftedPair {
  LiftedSelector first;
  LiftedSelector second;
};

// n in 1..5 over a stack with per-mode sizes dims (last entry K5). For n <= 4
// the pair wraps per_dim[n-1]; for n = 5 it is the leading/trailing (K5-1) window.
LiftedPair lifted_selectors(int n, const std::vector<int>& dims,
                            const std::vector<SelectorPair>& per_dim);

}  // namespace bsesprit
