// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <vector>

#include "bsesprit/channel_model.hpp"
#include "bsesprit/md_esprit.hpp"

namespace bsesprit {

struct ArrayFrames {
  int tx_facing = 1;
  int rx_facing = 1;
};

ArrayFrames frames_of(const Scenario& scenario);

struct LocalizationOptions {
  // Paths whose f_T + f_R is shorter than this are treated as a point constraint
  // (the LOS path, where mu vanishes and the projector is undefined).
  double los_tol = 1e-2;
};

struct PathConstraint {
  Vec3 f_t = Vec3::Zero();
  Vec3 f_r = Vec3::Zero();
  Vec3 mu = Vec3::Zero();
  Vec3 delta = Vec3::Zero();
  Mat3 c = Mat3::Zero();
  bool point = false;
};

struct LocalizationResult {
  Vec3 p_hat = Vec3::Zero();
  std::vector<PathConstraint> per_path;
  double condition = 0.0;
  Mat3 c_sum = Mat3::Zero();
};

enum class WeightRule { uniform, snr };

std::vector<double> localization_weights(const std::vector<PathParams>& paths, WeightRule rule);

PathConstraint path_constraint(const PathParams& p, const Vec3& p_t, double weight,
                               const ArrayFrames& frames, const LocalizationOptions& opts = {});

LocalizationResult localize(const std::vector<PathParams>& estimates, const Vec3& p_t,
                            const std::vector<double>& weights, const ArrayFrames& frames,
                            const LocalizationOptions& opts = {});

// Per-subcarrier quantities of the single-stream link built on the reconstructed channel.
struct RateTerms {
  RealVector signal;        // |w^H H_hat f|^2
  RealVector interference;  // |w^H (H_hat - H) f|^2
};

// Element-space channel of subcarrier m5: sum_l gamma_l e^{j m5 w5} a_R a_T^T.
ComplexMatrix element_channel(const std::vector<PathParams>& paths, const std::array<int, 5>& m,
                              double delta_f, int m5);

RateTerms rate_terms(const std::vector<PathParams>& estimate, const std::vector<PathParams>& truth,
                     const std::array<int, 5>& m, double delta_f);

double effective_rate(const RealVector& signal, const RealVector& mean_interference, double n0,
                      double e_s, int n_c, int n_p);

double perfect_csi_rate(const std::vector<PathParams>& truth, const std::array<int, 5>& m,
                        double delta_f, double n0, double e_s, int n_c, int n_p);

// Single-estimate rate: E|I|^2 replaced by this estimate's own |I|^2.
double rate(const EspritEstimate& estimate, const std::vector<PathParams>& truth,
            const std::array<int, 5>& m, double delta_f, double n0, double e_s, int n_c, int n_p);

}  // namespace bsesprit
