// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <memory>

#include "bsesprit/types.hpp"

namespace bsesprit::kernels {

struct SvdResult {
  ComplexMatrix left;
  RealVector singular_values;  // nonincreasing
  ComplexMatrix right;
};

struct EigResult {
  ComplexVector eigenvalues;
  ComplexMatrix eigenvectors;  // columns
};

inline constexpr double kDefaultPinvRtol = 1e-12;

SvdResult svd_thin(const ComplexMatrix& a);
EigResult eig_general(const ComplexMatrix& a);
ComplexMatrix pinv(const ComplexMatrix& a, double rtol = kDefaultPinvRtol);

// Number of singular values pinv would keep at the given tolerance.
Eigen::Index numerical_rank(const ComplexMatrix& a, double rtol = kDefaultPinvRtol);

// Full linear convolution by zero-padded FFT, length |a| + |b| - 1.
ComplexVector fft_convolve(const ComplexVector& a, const ComplexVector& b);

std::size_t next_pow2(std::size_t n);

bool all_finite(const ComplexMatrix& a);

// Fixed-length complex FFT. Holds mutable twiddle caches, so give each thread its own.
class Fft {
 public:
  explicit Fft(std::size_t n);
  ~Fft();
  Fft(Fft&&) noexcept;
  Fft& operator=(Fft&&) noexcept;

  std::size_t size() const noexcept { return n_; }
  // Inputs shorter than size() are zero padded.
  void forward(const ComplexVector& in, ComplexVector& out);
  // Normalized inverse (divides by size()).
  void inverse(const ComplexVector& in, ComplexVector& out);

 private:
  struct Impl;
  std::size_t n_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace bsesprit::kernels
