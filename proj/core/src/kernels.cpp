// SPDX-License-Identifier: Apache-2.0
#include "bsesprit/kernels.hpp"

#include <algorithm>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <unsupported/Eigen/FFT>

#include "bsesprit/errors.hpp"

namespace bsesprit::kernels {

bool all_finite(const ComplexMatrix& a) {
  return a.allFinite();
}

SvdResult svd_thin(const ComplexMatrix& a) {
  if (a.rows() < 1 || a.cols() < 1) {
    throw Error(ErrorCode::invalid_input, "svd_thin: empty matrix");
  }
  if (!all_finite(a)) {
    throw Error(ErrorCode::invalid_input, "svd_thin: non-finite entries");
  }
  Eigen::BDCSVD<ComplexMatrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) {
    throw Error(ErrorCode::numeric_failure, "svd_thin: no convergence",
                static_cast<int>(std::min(a.rows(), a.cols())));
  }
  return {svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

EigResult eig_general(const ComplexMatrix& a) {
  if (a.rows() != a.cols()) {
    throw Error(ErrorCode::shape_mismatch, "eig_general: matrix is not square");
  }
  if (!all_finite(a)) {
    throw Error(ErrorCode::invalid_input, "eig_general: non-finite entries");
  }
  Eigen::ComplexEigenSolver<ComplexMatrix> es;
  es.compute(a, true);
  if (es.info() != Eigen::Success) {
    throw Error(ErrorCode::numeric_failure, "eig_general: no convergence",
                static_cast<int>(es.getMaxIterations() * a.rows()));
  }
  return {es.eigenvalues(), es.eigenvectors()};
}

ComplexMatrix pinv(const ComplexMatrix& a, double rtol) {
  if (a.size() == 0) return ComplexMatrix::Zero(a.cols(), a.rows());
  if (!all_finite(a)) {
    throw Error(ErrorCode::invalid_input, "pinv: non-finite entries");
  }
  Eigen::BDCSVD<ComplexMatrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) {
    throw Error(ErrorCode::numeric_failure, "pinv: SVD did not converge");
  }
  const RealVector& s = svd.singularValues();
  ComplexMatrix out = ComplexMatrix::Zero(a.cols(), a.rows());
  if (s.size() == 0 || s(0) == 0.0) return out;
  const double cut = rtol * s(0);
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    if (s(k) <= cut) break;
    out.noalias() += svd.matrixV().col(k) * (svd.matrixU().col(k).adjoint() / s(k));
  }
  return out;
}

Eigen::Index numerical_rank(const ComplexMatrix& a, double rtol) {
  if (a.size() == 0) return 0;
  Eigen::BDCSVD<ComplexMatrix> svd(a);
  const RealVector& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  Eigen::Index r = 0;
  while (r < s.size() && s(r) > rtol * s(0)) ++r;
  return r;
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

struct Fft::Impl {
  Eigen::FFT<double> fft;
  std::vector<Complex> in;
  std::vector<Complex> out;
};

Fft::Fft(std::size_t n) : n_(n), impl_(std::make_unique<Impl>()) {
  if (n == 0) throw Error(ErrorCode::invalid_input, "Fft: zero length");
  impl_->in.assign(n, Complex(0.0, 0.0));
  impl_->out.assign(n, Complex(0.0, 0.0));
}

Fft::~Fft() = default;
Fft::Fft(Fft&&) noexcept = default;
Fft& Fft::operator=(Fft&&) noexcept = default;

void Fft::forward(const ComplexVector& in, ComplexVector& out) {
  if (static_cast<std::size_t>(in.size()) > n_) {
    throw Error(ErrorCode::shape_mismatch, "Fft::forward: input longer than transform");
  }
  std::fill(impl_->in.begin(), impl_->in.end(), Complex(0.0, 0.0));
  std::copy(in.data(), in.data() + in.size(), impl_->in.begin());
  impl_->fft.fwd(impl_->out.data(), impl_->in.data(), static_cast<Eigen::Index>(n_));
  out = Eigen::Map<const ComplexVector>(impl_->out.data(), static_cast<Eigen::Index>(n_));
}

void Fft::inverse(const ComplexVector& in, ComplexVector& out) {
  if (static_cast<std::size_t>(in.size()) != n_) {
    throw Error(ErrorCode::shape_mismatch, "Fft::inverse: length mismatch");
  }
  std::copy(in.data(), in.data() + in.size(), impl_->in.begin());
  impl_->fft.inv(impl_->out.data(), impl_->in.data(), static_cast<Eigen::Index>(n_));
  out = Eigen::Map<const ComplexVector>(impl_->out.data(), static_cast<Eigen::Index>(n_));
}

ComplexVector fft_convolve(const ComplexVector& a, const ComplexVector& b) {
  if (a.size() < 1 || b.size() < 1) {
    throw Error(ErrorCode::invalid_input, "fft_convolve: empty input");
  }
  if (!a.allFinite() || !b.allFinite()) {
    throw Error(ErrorCode::invalid_input, "fft_convolve: non-finite input");
  }
  const auto len = static_cast<std::size_t>(a.size() + b.size() - 1);
  Fft fft(next_pow2(len));
  ComplexVector fa, fb, c;
  fft.forward(a, fa);
  fft.forward(b, fb);
  fa.array() *= fb.array();
  fft.inverse(fa, c);
  return c.head(static_cast<Eigen::Index>(len));
}

}  // namespace bsesprit::kernels

namespace bsesprit {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_input: return "invalid input";
    case ErrorCode::numeric_failure: return "numeric failure";
    case ErrorCode::shape_mismatch: return "shape mismatch";
    case ErrorCode::needs_hybrid: return "needs hybrid";
    case ErrorCode::insufficient_beams: return "insufficient beams";
    case ErrorCode::singular_transform: return "singular transform";
    case ErrorCode::degenerate_geometry: return "degenerate geometry";
    case ErrorCode::out_of_domain: return "out of domain";
    case ErrorCode::underdetermined_pilot: return "underdetermined pilot";
    case ErrorCode::invalid_smoothing: return "invalid smoothing";
    case ErrorCode::pairing_failure: return "pairing failure";
    case ErrorCode::decomposition_failure: return "decomposition failure";
    case ErrorCode::cannot_lift: return "cannot lift";
    case ErrorCode::ill_posed_scenario: return "ill-posed scenario";
    case ErrorCode::singular_parameterization: return "singular parameterization";
    case ErrorCode::config_error: return "config error";
  }
  return "error";
}

}  // namespace bsesprit
