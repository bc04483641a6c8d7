// SPDX-License-Identifier: Apache-2.0
#include "bsesprit/slac.hpp"

#include <cmath>

#include <Eigen/QR>

#include "bsesprit/errors.hpp"
#include "bsesprit/kernels.hpp"

namespace bsesprit {

ArrayFrames frames_of(const Scenario& sc) {
  return {sc.resolved_tx_facing(), sc.resolved_rx_facing()};
}

std::vector<double> localization_weights(const std::vector<PathParams>& paths, WeightRule rule) {
  std::vector<double> w;
  for (const auto& p : paths) w.push_back(rule == WeightRule::snr ? std::norm(p.gamma) : 1.0);
  return w;
}

PathConstraint path_constraint(const PathParams& p, const Vec3& p_t, double weight,
                               const ArrayFrames& frames, const LocalizationOptions& opts) {
  if (!(p.phi_el > 0.0 && p.phi_el < kPi && p.theta_el > 0.0 && p.theta_el < kPi)) {
    throw Error(ErrorCode::invalid_input, "localize: elevation outside (0, pi)");
  }
  PathConstraint pc;
  pc.f_t = direction_vector(p.phi_az, p.phi_el, frames.tx_facing);
  pc.f_r = direction_vector(p.theta_az, p.theta_el, frames.rx_facing);
  const double ct = kSpeedOfLight * p.tau;
  pc.mu = ct * (pc.f_t + pc.f_r);
  pc.delta = p_t - ct * pc.f_r;
  if ((pc.f_t + pc.f_r).norm() < opts.los_tol) {
    pc.point = true;
    pc.c = weight * Mat3::Identity();
  } else {
    pc.c = weight * (Mat3::Identity() - pc.mu * pc.mu.transpose() / pc.mu.squaredNorm());
  }
  return pc;
}

LocalizationResult localize(const std::vector<PathParams>& estimates, const Vec3& p_t,
                            const std::vector<double>& weights, const ArrayFrames& frames,
                            const LocalizationOptions& opts) {
  if (estimates.empty()) throw Error(ErrorCode::invalid_input, "localize: no paths");
  if (weights.size() != estimates.size()) {
    throw Error(ErrorCode::shape_mismatch, "localize: one weight per path required");
  }
  LocalizationResult out;
  Vec3 rhs = Vec3::Zero();
  for (std::size_t l = 0; l < estimates.size(); ++l) {
    if (weights[l] < 0.0) throw Error(ErrorCode::invalid_input, "localize: negative weight");
    out.per_path.push_back(path_constraint(estimates[l], p_t, weights[l], frames, opts));
    out.c_sum += out.per_path.back().c;
    rhs += out.per_path.back().c * out.per_path.back().delta;
  }
  Eigen::JacobiSVD<Mat3> svd(out.c_sum);
  const auto& s = svd.singularValues();
  out.condition = s(2) > 0.0 ? s(0) / s(2) : std::numeric_limits<double>::infinity();
  if (!(s(2) > 1e-12 * s(0))) {
    throw Error(ErrorCode::degenerate_geometry, "localize: sum of path projectors is singular");
  }
  out.p_hat = out.c_sum.lu().solve(rhs);
  return out;
}

namespace {

struct ElementFactors {
  ComplexMatrix a_r;  // M3 M4 x L
  ComplexMatrix a_t;  // M1 M2 x L
  ComplexVector gamma;
  RealVector w5;
};

ElementFactors element_factors(const std::vector<PathParams>& paths, const std::array<int, 5>& m,
                               double delta_f) {
  const auto l = static_cast<Eigen::Index>(paths.size());
  ElementFactors ef;
  ef.a_r.resize(static_cast<Eigen::Index>(m[2]) * m[3], l);
  ef.a_t.resize(static_cast<Eigen::Index>(m[0]) * m[1], l);
  ef.gamma.resize(l);
  ef.w5.resize(l);
  for (Eigen::Index i = 0; i < l; ++i) {
    const PathParams& p = paths[static_cast<std::size_t>(i)];
    const AngularFreqs w = to_angular(p, delta_f);
    ComplexMatrix t1 = steering_vector(m[0], w[0]);
    ComplexMatrix t2 = steering_vector(m[1], w[1]);
    ComplexMatrix r3 = steering_vector(m[2], w[2]);
    ComplexMatrix r4 = steering_vector(m[3], w[3]);
    ef.a_t.col(i) = khatri_rao({t1, t2});
    ef.a_r.col(i) = khatri_rao({r3, r4});
    ef.gamma(i) = p.gamma;
    ef.w5(i) = w[4];
  }
  return ef;
}

ComplexVector subcarrier_gains(const ElementFactors& ef, int k) {
  ComplexVector d(ef.gamma.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) d(i) = ef.gamma(i) * std::polar(1.0, k * ef.w5(i));
  return d;
}

// Orthonormal basis and triangular factor of a thin QR.
struct ThinQr {
  ComplexMatrix q;
  ComplexMatrix r;
};

ThinQr thin_qr(const ComplexMatrix& a) {
  Eigen::HouseholderQR<ComplexMatrix> qr(a);
  const Eigen::Index k = std::min(a.rows(), a.cols());
  ThinQr out;
  out.q = qr.householderQ() * ComplexMatrix::Identity(a.rows(), k);
  out.r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  return out;
}

}  // namespace

ComplexMatrix element_channel(const std::vector<PathParams>& paths, const std::array<int, 5>& m,
                              double delta_f, int m5) {
  const ElementFactors ef = element_factors(paths, m, delta_f);
  return ef.a_r * subcarrier_gains(ef, m5).asDiagonal() * ef.a_t.transpose();
}

RateTerms rate_terms(const std::vector<PathParams>& estimate, const std::vector<PathParams>& truth,
                     const std::array<int, 5>& m, double delta_f) {
  const ElementFactors est = element_factors(estimate, m, delta_f);
  const ElementFactors tru = element_factors(truth, m, delta_f);
  const ThinQr qr_r = thin_qr(est.a_r);
  const ThinQr qr_t = thin_qr(est.a_t);
  RateTerms out;
  out.signal.resize(m[4]);
  out.interference.resize(m[4]);
  for (int k = 0; k < m[4]; ++k) {
    // H_hat = Q_R (R_R D R_T^T) Q_T^T, so the dominant pair comes from the small core.
    const ComplexVector d = subcarrier_gains(est, k);
    const ComplexMatrix core = qr_r.r * d.asDiagonal() * qr_t.r.transpose();
    Eigen::JacobiSVD<ComplexMatrix> svd(core, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const ComplexVector w = qr_r.q * svd.matrixU().col(0);
    const ComplexVector f = qr_t.q.conjugate() * svd.matrixV().col(0);
    const Complex u_hat = svd.singularValues()(0);
    const ComplexVector dt = subcarrier_gains(tru, k);
    const ComplexVector rw = tru.a_r.adjoint() * w;
    const ComplexVector tf = tru.a_t.transpose() * f;
    const Complex u_true = rw.conjugate().cwiseProduct(dt).cwiseProduct(tf).sum();
    out.signal(k) = std::norm(u_hat);
    out.interference(k) = std::norm(u_hat - u_true);
  }
  return out;
}

double effective_rate(const RealVector& signal, const RealVector& mean_interference, double n0,
                      double e_s, int n_c, int n_p) {
  if (signal.size() != mean_interference.size()) {
    throw Error(ErrorCode::shape_mismatch, "effective_rate: length mismatch");
  }
  const auto m5 = static_cast<double>(signal.size());
  double sum = 0.0;
  for (Eigen::Index k = 0; k < signal.size(); ++k) {
    const double eta = e_s * signal(k) / (n0 + e_s * mean_interference(k));
    sum += std::log2(1.0 + eta);
  }
  return static_cast<double>(n_c - n_p) / (m5 * n_c) * sum;
}

double perfect_csi_rate(const std::vector<PathParams>& truth, const std::array<int, 5>& m,
                        double delta_f, double n0, double e_s, int n_c, int n_p) {
  const RateTerms rt = rate_terms(truth, truth, m, delta_f);
  return effective_rate(rt.signal, RealVector::Zero(rt.signal.size()), n0, e_s, n_c, n_p);
}

double rate(const EspritEstimate& estimate, const std::vector<PathParams>& truth,
            const std::array<int, 5>& m, double delta_f, double n0, double e_s, int n_c, int n_p) {
  const RateTerms rt = rate_terms(estimate.params, truth, m, delta_f);
  return effective_rate(rt.signal, rt.interference, n0, e_s, n_c, n_p);
}

}  // namespace bsesprit
