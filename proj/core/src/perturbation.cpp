// SPDX-License-Identifier: Apache-2.0
#include "bsesprit/perturbation.hpp"

#include <cmath>

#include "bsesprit/errors.hpp"
#include "bsesprit/kernels.hpp"
#include "bsesprit/shift_invariance.hpp"

namespace bsesprit {

namespace {

std::vector<double> dim_freqs(const std::vector<AngularFreqs>& freqs, int n) {
  std::vector<double> out;
  for (const auto& w : freqs) out.push_back(w[static_cast<std::size_t>(n)]);
  return out;
}

ComplexMatrix index_ramp(int m) {
  ComplexMatrix d = ComplexMatrix::Zero(m, m);
  for (int i = 0; i < m; ++i) d(i, i) = static_cast<double>(i);
  return d;
}

double rmse_of(double norm2, double n0, int n_p, double e_s) {
  return std::sqrt(n0 * norm2 / (2.0 * n_p * e_s));
}

}  // namespace

ComplexMatrix manifold_derivative(const std::vector<AngularFreqs>& freqs,
                                  const std::array<BeamTransform, 4>& transforms, int m5, int n) {
  std::vector<ComplexMatrix> factors;
  for (int d = 0; d < 5; ++d) {
    const std::vector<double> om = dim_freqs(freqs, d);
    const ComplexMatrix a = d < 4 ? steering_matrix(transforms[d].m(), om) : steering_matrix(m5, om);
    if (d == n) {
      // d/dw a(w) = j diag(0..M-1) a(w); with T-breve = -j diag(0..M-1) T this is T-breve^H a.
      const ComplexMatrix da = kJ * (index_ramp(static_cast<int>(a.rows())) * a);
      factors.push_back(d < 4 ? ComplexMatrix(transforms[d].t.adjoint() * da) : da);
    } else {
      factors.push_back(d < 4 ? ComplexMatrix(transforms[d].t.adjoint() * a) : a);
    }
  }
  return khatri_rao(factors);
}

PerturbationKit build_xi_upsilon(const std::vector<PathParams>& paths,
                                 const std::array<BeamTransform, 4>& transforms, int m5, int l5,
                                 double delta_f) {
  const int l = static_cast<int>(paths.size());
  if (l < 1) throw Error(ErrorCode::invalid_input, "build_xi_upsilon: no paths");
  if (l5 <= 0) l5 = default_l5(m5);
  PerturbationKit kit;
  kit.m5 = m5;
  kit.l5 = l5;
  kit.k5 = m5 + 1 - l5;
  kit.delta_f = delta_f;
  kit.paths = paths;
  for (const auto& p : paths) kit.freqs.push_back(to_angular(p, delta_f));

  std::vector<SelectorPair> per_dim;
  std::vector<ComplexMatrix> p_factors;
  std::vector<int> stack_dims;
  for (int d = 0; d < 4; ++d) {
    if (transforms[d].selectors.first.size() == 0) {
      throw Error(ErrorCode::ill_posed_scenario,
                  "build_xi_upsilon: hybrid dimensions are not covered by the analysis");
    }
    per_dim.push_back(transforms[d].selectors);
    p_factors.push_back(beam_factor(transforms[d], dim_freqs(kit.freqs, d)));
    stack_dims.push_back(transforms[d].n());
  }
  const std::vector<double> w5 = dim_freqs(kit.freqs, 4);
  p_factors.push_back(steering_matrix(kit.k5, w5));
  stack_dims.push_back(kit.k5);
  const ComplexMatrix p = khatri_rao(p_factors);
  const ComplexMatrix g = steering_matrix(l5, w5);
  const ComplexMatrix gt_pinv = kernels::pinv(g.transpose());

  kit.lambda.assign(static_cast<std::size_t>(l), {});
  kit.xi.assign(static_cast<std::size_t>(l), {});
  kit.upsilon.assign(static_cast<std::size_t>(l), {});
  for (int i = 0; i < l; ++i) kit.chi.push_back(gt_pinv.col(i).conjugate());

  const Eigen::Index blocks = p.rows() / kit.k5;
  for (int n = 0; n < 5; ++n) {
    const LiftedPair sel = lifted_selectors(n + 1, stack_dims, per_dim);
    const ComplexMatrix x1 = sel.first.apply(p);
    if (kernels::numerical_rank(x1, 1e-10) < l) {
      throw Error(ErrorCode::ill_posed_scenario,
                  "build_xi_upsilon: J1 P is rank deficient in dimension " + std::to_string(n + 1));
    }
    const ComplexMatrix x1_pinv = kernels::pinv(x1);
    for (int i = 0; i < l; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      const Complex phi = std::polar(1.0, kit.freqs[ui][static_cast<std::size_t>(n)]);
      // lambda = (J2 - Phi J1)^H r^H with r the i-th row of (J1 P)^+.
      const ComplexMatrix rh = x1_pinv.row(i).adjoint();
      const ComplexVector lam =
          sel.second.apply_adjoint(rh) - std::conj(phi) * sel.first.apply_adjoint(rh);
      ComplexVector xi(blocks * m5);
      for (Eigen::Index b = 0; b < blocks; ++b) {
        xi.segment(b * m5, m5) = kernels::fft_convolve(lam.segment(b * kit.k5, kit.k5), kit.chi[ui]);
      }
      const Complex gamma = paths[ui].gamma;
      if (std::abs(gamma) == 0.0) {
        throw Error(ErrorCode::ill_posed_scenario, "build_xi_upsilon: zero path gain");
      }
      kit.upsilon[ui][static_cast<std::size_t>(n)] = phi * xi / std::conj(gamma);
      kit.xi[ui][static_cast<std::size_t>(n)] = std::move(xi);
      kit.lambda[ui][static_cast<std::size_t>(n)] = lam;
    }
  }
  return kit;
}

void build_kappa(PerturbationKit& kit, const std::array<BeamTransform, 4>& transforms) {
  const int l = static_cast<int>(kit.paths.size());
  constexpr double kSingularTol = 1e-9;
  kit.kappa.assign(static_cast<std::size_t>(l), {});
  for (int i = 0; i < l; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const PathParams& p = kit.paths[ui];
    const auto& u = kit.upsilon[ui];
    auto angles = [&](double az, double el, const ComplexVector& u_az, const ComplexVector& u_el,
                      ComplexVector& k_az, ComplexVector& k_el, const char* side) {
      const double se = std::sin(el);
      const double ca = std::cos(az);
      if (std::abs(se) < kSingularTol || std::abs(ca) < kSingularTol) {
        throw Error(ErrorCode::singular_parameterization,
                    std::string(side) + " angles of path " + std::to_string(i) +
                        " hit cos(az) = 0 or sin(el) = 0");
      }
      // w_az = pi sin(az) sin(el), w_el = pi cos(el), linearized and inverted.
      k_el = -u_el / (kPi * se);
      k_az = u_az / (kPi * ca * se) + std::sin(az) * std::cos(el) * u_el / (kPi * ca * se * se);
    };
    auto& k = kit.kappa[ui];
    angles(p.phi_az, p.phi_el, u[0], u[1], k[0], k[1], "departure");
    angles(p.theta_az, p.theta_el, u[2], u[3], k[2], k[3], "arrival");
    k[4] = -u[4] / (2.0 * kPi * kit.delta_f);
  }

  const ComplexMatrix b = beamspace_manifold(kit.freqs, transforms, kit.m5);
  const ComplexMatrix b_pinv = kernels::pinv(b);
  ComplexVector gamma(l);
  for (int i = 0; i < l; ++i) gamma(i) = kit.paths[static_cast<std::size_t>(i)].gamma;
  for (int n = 0; n < 5; ++n) {
    kit.upsilon_gain[n] =
        b_pinv * manifold_derivative(kit.freqs, transforms, kit.m5, n) * gamma.asDiagonal();
  }

  const Eigen::Index jlen = b.rows();
  kit.pi.assign(static_cast<std::size_t>(l), RealMatrix());
  for (int i = 0; i < l; ++i) {
    // dgamma_i = (r - Wx) x + (j r - Wy) y, with dh = x + j y.
    const ComplexVector r = b_pinv.row(i).transpose();
    ComplexVector wx = ComplexVector::Zero(jlen);
    ComplexVector wy = ComplexVector::Zero(jlen);
    for (int n = 0; n < 5; ++n) {
      for (int q = 0; q < l; ++q) {
        const Complex rho = kit.upsilon_gain[n](i, q);
        // Im{v^H dh} = Im(conj v)^T x + Re(conj v)^T y
        const ComplexVector& v = kit.upsilon[static_cast<std::size_t>(q)][static_cast<std::size_t>(n)];
        wx += rho * (-v.imag()).cast<Complex>();
        wy += rho * v.real().cast<Complex>();
      }
    }
    const ComplexVector cx = r - wx;
    const ComplexVector cy = kJ * r - wy;
    RealMatrix pi(2, 2 * jlen);
    pi.block(0, 0, 1, jlen) = cx.real().transpose();
    pi.block(0, jlen, 1, jlen) = cy.real().transpose();
    pi.block(1, 0, 1, jlen) = cx.imag().transpose();
    pi.block(1, jlen, 1, jlen) = cy.imag().transpose();
    kit.pi[static_cast<std::size_t>(i)] = std::move(pi);
  }
  kit.has_kappa = true;
}

void build_psi(PerturbationKit& kit, const Vec3& p_t, const ArrayFrames& frames,
               const std::vector<double>& weights, const LocalizationOptions& opts) {
  if (!kit.has_kappa) throw Error(ErrorCode::invalid_input, "build_psi: kappa not built");
  const LocalizationResult loc = localize(kit.paths, p_t, weights, frames, opts);
  const Mat3 c_inv = loc.c_sum.inverse();
  const Eigen::Index jlen = kit.kappa[0][0].size();
  kit.psi = ComplexMatrix::Zero(3, jlen);
  for (std::size_t i = 0; i < kit.paths.size(); ++i) {
    const PathParams& p = kit.paths[i];
    const PathConstraint& pc = loc.per_path[i];
    auto omega = [](double az, double el, int facing) {
      Eigen::Matrix<double, 3, 2> o;
      o.col(0) << -facing * std::sin(az) * std::sin(el), std::cos(az) * std::sin(el), 0.0;
      o.col(1) << facing * std::cos(az) * std::cos(el), std::sin(az) * std::cos(el), -std::sin(el);
      return o;
    };
    const Eigen::Matrix<double, 3, 2> om_t = omega(p.phi_az, p.phi_el, frames.tx_facing);
    const Eigen::Matrix<double, 3, 2> om_r = omega(p.theta_az, p.theta_el, frames.rx_facing);

    Mat3 rx_jac;  // d delta / d(theta_az, theta_el, tau), up to the -c factor
    rx_jac << p.tau * om_r, pc.f_r;
    const Mat3 d_breve = -kSpeedOfLight * c_inv * pc.c * rx_jac;

    Eigen::Matrix<double, 3, 5> mu_jac;  // d mu / d(eta), up to the c factor
    mu_jac << p.tau * om_t, p.tau * om_r, pc.f_t + pc.f_r;
    Mat3 c_breve = Mat3::Zero();
    if (!pc.point) {
      const Vec3 v = pc.delta - loc.p_hat;
      const Vec3& mu = pc.mu;
      const double m2 = mu.squaredNorm();
      const double mv = mu.dot(v);
      c_breve = weights[i] * (2.0 * mv * mu * mu.transpose() / (m2 * m2) -
                              (mv * Mat3::Identity() + mu * v.transpose()) / m2);
    }
    const Eigen::Matrix<double, 3, 5> e_breve = kSpeedOfLight * c_inv * c_breve * mu_jac;

    const auto& k = kit.kappa[i];
    for (int a = 0; a < 3; ++a) {
      kit.psi += d_breve.col(a).cast<Complex>() * k[static_cast<std::size_t>(2 + a)].adjoint();
    }
    for (int a = 0; a < 5; ++a) {
      kit.psi += e_breve.col(a).cast<Complex>() * k[static_cast<std::size_t>(a)].adjoint();
    }
  }
  kit.has_psi = true;
}

std::vector<ParamRmse> analytic_param_rmse(const PerturbationKit& kit, double n0, int n_p,
                                           double e_s) {
  std::vector<ParamRmse> out;
  for (std::size_t i = 0; i < kit.paths.size(); ++i) {
    ParamRmse r;
    for (int n = 0; n < 5; ++n) {
      r.omega[static_cast<std::size_t>(n)] =
          rmse_of(kit.upsilon[i][static_cast<std::size_t>(n)].squaredNorm(), n0, n_p, e_s);
    }
    if (kit.has_kappa) {
      const auto& k = kit.kappa[i];
      r.phi_az = rmse_of(k[0].squaredNorm(), n0, n_p, e_s);
      r.phi_el = rmse_of(k[1].squaredNorm(), n0, n_p, e_s);
      r.theta_az = rmse_of(k[2].squaredNorm(), n0, n_p, e_s);
      r.theta_el = rmse_of(k[3].squaredNorm(), n0, n_p, e_s);
      r.tau = rmse_of(k[4].squaredNorm(), n0, n_p, e_s);
      r.tau_m = kSpeedOfLight * r.tau;
      r.gamma = rmse_of(kit.pi[i].squaredNorm(), n0, n_p, e_s);
    }
    out.push_back(r);
  }
  return out;
}

double analytic_pos_rmse(const PerturbationKit& kit, double n0, int n_p, double e_s) {
  if (!kit.has_psi) throw Error(ErrorCode::invalid_input, "analytic_pos_rmse: Psi not built");
  return rmse_of(kit.psi.squaredNorm(), n0, n_p, e_s);
}

std::array<double, 5> predicted_param_shift(const PerturbationKit& kit, int path,
                                            const ComplexVector& dh) {
  std::array<double, 5> out{};
  const auto& k = kit.kappa.at(static_cast<std::size_t>(path));
  for (int n = 0; n < 5; ++n) out[static_cast<std::size_t>(n)] = std::imag(k[static_cast<std::size_t>(n)].dot(dh));
  return out;
}

Complex predicted_gain_shift(const PerturbationKit& kit, int path, const ComplexVector& dh) {
  const RealMatrix& pi = kit.pi.at(static_cast<std::size_t>(path));
  RealVector xy(2 * dh.size());
  xy << dh.real(), dh.imag();
  const RealVector g = pi * xy;
  return {g(0), g(1)};
}

Vec3 predicted_position_shift(const PerturbationKit& kit, const ComplexVector& dh) {
  return (kit.psi * dh).imag();
}

}  // namespace bsesprit
