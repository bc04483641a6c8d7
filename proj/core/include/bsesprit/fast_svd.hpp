// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>

#include "bsesprit/channel_model.hpp"
#include "bsesprit/kernels.hpp"
#include "bsesprit/types.hpp"

namespace bsesprit {

// The smoothed matrix as an operator: rows (block, k), k < K5; column l; entry h_block[k + l].
class HankelBlockOperator {
 public:
  HankelBlockOperator(const BeamspaceTensor& tensor, int l5);
  HankelBlockOperator(const ComplexVector& h, Eigen::Index blocks, int m5, int l5);

  Eigen::Index rows() const noexcept { return blocks_ * k5_; }
  Eigen::Index cols() const noexcept { return l5_; }
  Eigen::Index blocks() const noexcept { return blocks_; }
  int k5() const noexcept { return k5_; }
  int l5() const noexcept { return l5_; }
  int m5() const noexcept { return m5_; }
  std::size_t fft_length() const noexcept { return nfft_; }
  double frobenius_norm() const noexcept { return fro_; }

  ComplexVector apply(const ComplexVector& x) const;
  ComplexVector apply_adjoint(const ComplexVector& y) const;
  ComplexMatrix dense() const;

 private:
  void build(const ComplexVector& h);

  Eigen::Index blocks_ = 0;
  int m5_ = 0, k5_ = 0, l5_ = 0;
  std::size_t nfft_ = 0;
  ComplexMatrix spectra_;  // nfft x blocks
  ComplexVector source_;
  double fro_ = 0.0;
};

ComplexVector hankel_matvec(const HankelBlockOperator& op, const ComplexVector& x, bool adjoint);

enum class Reorth { full, none };

struct Bidiagonal {
  RealVector a;  // diagonal
  RealVector b;  // superdiagonal, length a.size() - 1
  ComplexMatrix u_frame;
  ComplexMatrix v_frame;
  int steps_run = 0;
  bool invariant_subspace = false;
};

inline constexpr double kLanczosBreakdownTol = 1e-12;

Bidiagonal lanczos_bidiag(const HankelBlockOperator& op, int steps, Reorth reorth = Reorth::full,
                          const ComplexVector* start = nullptr,
                          double breakdown_tol = kLanczosBreakdownTol);

struct RealSvd {
  RealMatrix u;
  RealVector s;
  RealMatrix v;
  int iterations = 0;
};

// SVD of the real upper bidiagonal matrix with diagonal a and superdiagonal b
// by implicit-shift QR (Golub-Kahan). B = U diag(s) V^T, s nonincreasing.
RealSvd bidiag_svd(const RealVector& a, const RealVector& b, int max_sweeps = 0);
kernels::SvdResult bidiag_svd(const Bidiagonal& bd);

struct FastSvdOptions {
  int steps = 0;  // 0: default_lanczos_steps
  Reorth reorth = Reorth::full;
  std::optional<ComplexVector> start;
};

// min(L5, L + 12): the extra Krylov directions give Ritz convergence margin while
// keeping the cost close to linear in L.
int default_lanczos_steps(int l, int l5);

ComplexMatrix fast_signal_subspace(const HankelBlockOperator& op, int l,
                                   const FastSvdOptions& opts = {}, Bidiagonal* info = nullptr);

}  // namespace bsesprit
