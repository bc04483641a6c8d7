// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <vector>

#include "bsesprit/channel_model.hpp"
#include "bsesprit/slac.hpp"

namespace bsesprit {

struct PerturbationKit {
  int m5 = 0;
  int k5 = 0;
  int l5 = 0;
  double delta_f = 0.0;
  std::vector<PathParams> paths;
  std::vector<AngularFreqs> freqs;

  // Indexed [path][dimension].
  std::vector<std::array<ComplexVector, 5>> lambda;  // length N1..N4 K5
  std::vector<ComplexVector> chi;                    // length L5
  std::vector<std::array<ComplexVector, 5>> xi;      // length J
  std::vector<std::array<ComplexVector, 5>> upsilon;

  bool has_kappa = false;
  std::vector<std::array<ComplexVector, 5>> kappa;  // phi_az, phi_el, theta_az, theta_el, tau
  std::array<ComplexMatrix, 5> upsilon_gain;        // B^+ B'_n Diag(gamma)
  std::vector<RealMatrix> pi;                       // 2 x 2J per path

  bool has_psi = false;
  ComplexMatrix psi;  // 3 x J
};

PerturbationKit build_xi_upsilon(const std::vector<PathParams>& paths,
                                 const std::array<BeamTransform, 4>& transforms, int m5, int l5,
                                 double delta_f);

void build_kappa(PerturbationKit& kit, const std::array<BeamTransform, 4>& transforms);

void build_psi(PerturbationKit& kit, const Vec3& p_t, const ArrayFrames& frames,
               const std::vector<double>& weights, const LocalizationOptions& opts = {});

struct ParamRmse {
  std::array<double, 5> omega{};
  double phi_az = 0.0;
  double phi_el = 0.0;
  double theta_az = 0.0;
  double theta_el = 0.0;
  double tau = 0.0;    // seconds
  double tau_m = 0.0;  // meters (c * tau)
  double gamma = 0.0;
};

std::vector<ParamRmse> analytic_param_rmse(const PerturbationKit& kit, double n0, int n_p,
                                           double e_s);
double analytic_pos_rmse(const PerturbationKit& kit, double n0, int n_p, double e_s);

// First-order predictions for one error draw, for validating the formulas.
std::array<double, 5> predicted_param_shift(const PerturbationKit& kit, int path,
                                            const ComplexVector& dh);
Complex predicted_gain_shift(const PerturbationKit& kit, int path, const ComplexVector& dh);
Vec3 predicted_position_shift(const PerturbationKit& kit, const ComplexVector& dh);

// Full manifold with factor n replaced by its derivative in omega_n.
ComplexMatrix manifold_derivative(const std::vector<AngularFreqs>& freqs,
                                  const std::array<BeamTransform, 4>& transforms, int m5, int n);

}  // namespace bsesprit
