// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "bsesprit/channel_model.hpp"
#include "bsesprit/md_esprit.hpp"

namespace bsesprit {

struct CpModel {
  ComplexVector weights;                // lambda
  std::array<ComplexMatrix, 5> factors;  // unit-norm columns
  double fit = 1.0;                     // ||X - X_hat|| / ||X||
  int iterations = 0;
  int restart = 0;
  std::vector<double> fit_history;
};

struct CpOptions {
  int max_iter = 500;
  double tol = 1e-10;
  int restarts = 3;
  bool line_search = true;
  std::uint64_t seed = 0x63705f616c73ULL;
};

CpModel cp_als(const BeamspaceTensor& tensor, int l, const CpOptions& opts = {});

// Dense reconstruction of a CP model (row-major, like BeamspaceTensor::values).
ComplexVector cp_reconstruct(const CpModel& model);

EspritEstimate tensor_esprit_pipeline(const BeamspaceTensor& noisy,
                                      const std::array<BeamTransform, 4>& transforms, int l,
                                      double delta_f, const CpOptions& opts = {});

}  // namespace bsesprit
