// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "bsesprit/channel_model.hpp"
#include "bsesprit/fast_svd.hpp"
#include "bsesprit/shift_invariance.hpp"

namespace bsesprit {

struct SmoothedMatrix {
  ComplexMatrix values;  // (N1 N2 N3 N4 K5) x L5
  int k5 = 0;
  int l5 = 0;
};

enum class SubspaceMethod { dense, fast };

struct EspritDiagnostics {
  double subspace_gap = 0.0;  // sigma_L / sigma_{L+1}; infinite when unavailable
  bool no_gap_warning = false;
  double pairing_separation = 0.0;  // min eigen-separation of K, relative to max |Lambda|
  int beta_draws = 0;
  double residual = 0.0;  // ||h - B gamma|| / ||h||
  double gain_condition = 0.0;
  std::vector<int> clamped_paths;
  std::array<int, 5> gamma_rank{};
  std::array<bool, 4> lifted{};
  int lanczos_steps = 0;
};

struct EspritEstimate {
  std::vector<AngularFreqs> freqs;
  ComplexVector gains;
  std::vector<PathParams> params;
  EspritDiagnostics diagnostics;
};

struct EspritOptions {
  SubspaceMethod method = SubspaceMethod::dense;
  FastSvdOptions fast;
  double delta_f = 120e3;
  std::optional<std::array<double, 5>> beta;
  std::uint64_t pairing_seed = 0x7061697273ULL;
  double pinv_rtol = kernels::kDefaultPinvRtol;
  double sep_tol = 1e-6;
  int beta_redraws = 8;
};

int default_l5(int m5);

SmoothedMatrix spatial_smooth(const BeamspaceTensor& tensor, int l5);

// Top-L left singular subspace of the smoothed matrix (dense SVD).
ComplexMatrix signal_subspace(const SmoothedMatrix& h, int l, EspritDiagnostics* diag = nullptr);
// Either route straight from the tensor; the fast route never forms the smoothed matrix.
ComplexMatrix signal_subspace(const BeamspaceTensor& tensor, int l5, int l, SubspaceMethod method,
                              const FastSvdOptions& fast = {}, EspritDiagnostics* diag = nullptr);

ComplexMatrix gamma_n(const ComplexMatrix& us, const LiftedPair& selectors,
                      double rtol = kernels::kDefaultPinvRtol, int* rank = nullptr);

struct PairingResult {
  ComplexMatrix e;
  std::vector<AngularFreqs> freqs;
  std::array<double, 5> beta{};
  double separation = 0.0;
  int draws = 0;
};

PairingResult auto_pair(const std::array<ComplexMatrix, 5>& gammas, Rng& rng,
                        const std::optional<std::array<double, 5>>& beta = std::nullopt,
                        double sep_tol = 1e-6, int redraws = 8);

ComplexVector estimate_gains(const std::vector<AngularFreqs>& freqs,
                             const std::array<BeamTransform, 4>& transforms,
                             const BeamspaceTensor& h, double rtol = kernels::kDefaultPinvRtol,
                             double* condition = nullptr);

// n in 1..4: n-mode product with (T_n^H)^+, returning mode n to element space.
BeamspaceTensor hybrid_lift(const BeamspaceTensor& tensor, int n, const ComplexMatrix& t);

// l5 <= 0 selects default_l5(M5).
EspritEstimate esprit_pipeline(const BeamspaceTensor& noisy,
                               const std::array<BeamTransform, 4>& transforms, int l, int l5,
                               const EspritOptions& opts = {});

}  // namespace bsesprit
