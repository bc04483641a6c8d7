// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <Eigen/QR>

#include <map>

#include "bsesprit/errors.hpp"
#include "bsesprit/harness.hpp"
#include "bsesprit/md_esprit.hpp"
#include "bsesprit/perturbation.hpp"
#include "bsesprit/slac.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace bsesprit;

namespace {

ComplexMatrix cod_pinv(const ComplexMatrix& a) {
  return Eigen::CompleteOrthogonalDecomposition<ComplexMatrix>(a).pseudoInverse();
}

ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
  ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

struct Bench {
  fixture::Setup s;
  PerturbationKit kit;
};

Bench make_bench(BeamKind kind = BeamKind::dft) {
  Bench b;
  b.s = fixture::make_setup(fixture::desk_scenario(kind));
  b.kit = build_xi_upsilon(b.s.paths, b.s.tr, b.s.sc.m[4], 0, b.s.sc.delta_f);
  build_kappa(b.kit, b.s.tr);
  build_psi(b.kit, b.s.sc.p_t, frames_of(b.s.sc), {1.0, 1.0});
  return b;
}

// Pipeline estimate reordered to truth order.
std::vector<PathParams> estimate_in_truth_order(const Bench& b, const ComplexVector& h) {
  BeamspaceTensor t = b.s.h;
  t.values = h;
  EspritOptions o;
  o.method = SubspaceMethod::fast;
  o.delta_f = b.s.sc.delta_f;
  const EspritEstimate est = esprit_pipeline(t, b.s.tr, 2, 0, o);
  const auto perm = match_paths(est.freqs, b.kit.freqs);
  std::vector<PathParams> out;
  for (int p : perm) out.push_back(est.params[p]);
  return out;
}

double param(const PathParams& p, int which) {
  switch (which) {
    case 0: return p.phi_az;
    case 1: return p.phi_el;
    case 2: return p.theta_az;
    case 3: return p.theta_el;
    default: return p.tau;
  }
}

}  // namespace

TEST(Xi, MatrixAndVectorFormsAgree) {
  const Bench b = make_bench();
  Rng rng = make_stream(61);
  BeamspaceTensor dh = b.s.h;
  for (int draw = 0; draw < 100; ++draw) {
    fill_complex_normal(rng, dh.values, 1.0);
    const ComplexMatrix dH = spatial_smooth(dh, b.kit.l5).values;
    for (int l = 0; l < 2; ++l) {
      for (int n = 0; n < 5; ++n) {
        const ComplexVector& lam = b.kit.lambda[l][n];
        const ComplexVector chi_c = b.kit.chi[l].conjugate();
        const Complex matrix_form = (lam.adjoint() * dH * chi_c)(0, 0);
        const Complex vector_form = b.kit.xi[l][n].dot(dh.values);
        const double scale = lam.norm() * dH.norm() * chi_c.norm();
        EXPECT_LT(std::abs(matrix_form - vector_form), 1e-10 * scale);
      }
    }
  }
}

TEST(Xi, DenseConstructionOnSmallIdentitySystem) {
  // Every object built densely: Kronecker selectors, COD pseudoinverses, direct convolution.
  const int m = 3, m5 = 6, l5 = 3, k5 = m5 + 1 - l5;
  const double df = 1e6;
  const auto tr = fixture::identity_transforms({m, m, m, m});
  PathParams p;
  p.phi_az = 0.3;
  p.phi_el = 1.2;
  p.theta_az = -0.2;
  p.theta_el = 1.9;
  p.tau = 0.3 / df;
  p.gamma = {0.6, 0.8};
  const PerturbationKit kit = build_xi_upsilon({p}, tr, m5, l5, df);
  const AngularFreqs w = to_angular(p, df);

  std::vector<ComplexMatrix> f;
  for (int n = 0; n < 4; ++n) f.push_back(steering_vector(m, w[n]));
  f.push_back(steering_vector(k5, w[4]));
  const ComplexMatrix pm = oracle::khatri_rao_naive(f);
  const ComplexVector g = steering_vector(l5, w[4]);
  const ComplexVector chi = cod_pinv(g.transpose()).col(0).conjugate();
  EXPECT_LT((kit.chi[0] - chi).norm(), 1e-12);

  for (int n = 0; n < 5; ++n) {
    ComplexMatrix s1, s2;
    if (n < 4) {
      s1 = tr[n].selectors.first;
      s2 = tr[n].selectors.second;
    } else {
      s1 = ComplexMatrix::Identity(k5 - 1, k5);
      s2 = ComplexMatrix::Zero(k5 - 1, k5);
      s2.rightCols(k5 - 1) = ComplexMatrix::Identity(k5 - 1, k5 - 1);
    }
    ComplexMatrix j1 = ComplexMatrix::Identity(1, 1), j2 = j1;
    const std::array<int, 5> dims = {m, m, m, m, k5};
    for (int k = 0; k < 5; ++k) {
      const ComplexMatrix eye = ComplexMatrix::Identity(dims[k], dims[k]);
      j1 = kron(j1, k == n ? s1 : eye);
      j2 = kron(j2, k == n ? s2 : eye);
    }
    const ComplexMatrix r = cod_pinv(j1 * pm);
    const Complex phi = std::polar(1.0, w[n]);
    const ComplexVector lam = ((r * (j2 - phi * j1)).adjoint()).col(0);
    EXPECT_LT((kit.lambda[0][n] - lam).norm(), 1e-10 * lam.norm()) << "dimension " << n;
    ComplexVector xi(81 * m5);
    for (int blk = 0; blk < 81; ++blk) {
      xi.segment(blk * m5, m5) = oracle::direct_convolve(lam.segment(blk * k5, k5), chi);
    }
    EXPECT_LT((kit.xi[0][n] - xi).norm(), 1e-10 * xi.norm());
    EXPECT_LT((kit.upsilon[0][n] - phi * xi / std::conj(p.gamma)).norm(), 1e-10 * xi.norm());
  }
}

TEST(Xi, PipelineFrequencyErrorsFollowTheLinearization) {
  // The weak scattered path still shows second-order terms at 40 dB (correlation ~0.98).
  const Bench b = make_bench();
  Scenario sc = b.s.sc;
  sc.n0 = noise_for_snr(b.s.paths, b.s.tr, sc, 50.0);
  const int trials = 60;
  std::array<std::array<std::vector<double>, 5>, 2> sim, pred;
  for (int t = 0; t < trials; ++t) {
    Rng rng = make_stream(62, {static_cast<std::uint64_t>(t)});
    const BeamspaceTensor noisy = observe_and_estimate(b.s.h, sc, rng);
    const ComplexVector dh = noisy.values - b.s.h.values;
    BeamspaceTensor tt = noisy;
    EspritOptions o;
    o.method = SubspaceMethod::fast;
    o.delta_f = sc.delta_f;
    const EspritEstimate est = esprit_pipeline(tt, b.s.tr, 2, 0, o);
    const auto perm = match_paths(est.freqs, b.kit.freqs);
    for (int l = 0; l < 2; ++l) {
      for (int n = 0; n < 5; ++n) {
        sim[l][n].push_back(wrap_angle(est.freqs[perm[l]][n] - b.kit.freqs[l][n]));
        pred[l][n].push_back(std::imag(b.kit.upsilon[l][n].dot(dh)));
      }
    }
  }
  for (int l = 0; l < 2; ++l) {
    for (int n = 0; n < 5; ++n) {
      const Eigen::Map<const RealVector> a(sim[l][n].data(), trials), p(pred[l][n].data(), trials);
      const double corr = a.dot(p) / (a.norm() * p.norm());
      EXPECT_GT(corr, 0.99) << "path " << l << " dimension " << n;
    }
  }
}

TEST(Kappa, ElevationAtHorizonAndSingularAzimuth) {
  Scenario sc = fixture::desk_scenario();
  sc.p_t = {20.0, 5.0, 1.5};  // LOS horizontal: both elevations are pi/2
  const fixture::Setup s = fixture::make_setup(sc);
  PerturbationKit kit = build_xi_upsilon(s.paths, s.tr, sc.m[4], 0, sc.delta_f);
  build_kappa(kit, s.tr);
  ASSERT_NEAR(s.paths[0].phi_el, kPi / 2, 1e-14);
  EXPECT_LT((kit.kappa[0][1] + kit.upsilon[0][1] / kPi).norm(), 1e-12 * kit.upsilon[0][1].norm());
  EXPECT_LT((kit.kappa[0][3] + kit.upsilon[0][3] / kPi).norm(), 1e-12 * kit.upsilon[0][3].norm());

  PerturbationKit bad = kit;
  bad.paths[1].phi_az = kPi / 2;
  try {
    build_kappa(bad, s.tr);
    ADD_FAILURE() << "expected singular_parameterization";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::singular_parameterization);
    EXPECT_NE(std::string(e.what()).find("path 1"), std::string::npos);
  }
}

TEST(Kappa, FiniteDifferenceSlopes) {
  const Bench b = make_bench();
  const ComplexVector& h = b.s.h.values;
  Rng rng = make_stream(63);
  for (int dir = 0; dir < 3; ++dir) {
    ComplexVector d(h.size());
    fill_complex_normal(rng, d, 1.0);
    d *= h.norm() / d.norm();
    // One pipeline run per step, cached across all parameters.
    std::map<double, std::vector<PathParams>> cache;
    auto run = [&](double eps) -> const std::vector<PathParams>& {
      auto it = cache.find(eps);
      if (it == cache.end()) it = cache.emplace(eps, estimate_in_truth_order(b, h + eps * d)).first;
      return it->second;
    };
    const double eps = 1e-6;
    for (int l = 0; l < 2; ++l) {
      const auto pr = predicted_param_shift(b.kit, l, d);
      for (int which = 0; which < 5; ++which) {
        const double slope = oracle::richardson_derivative(
            [&](double e) { return param(run(e)[l], which); }, eps);
        EXPECT_NEAR(slope, pr[which], 0.01 * std::abs(pr[which]))
            << "path " << l << " parameter " << which << " direction " << dir;
      }
    }
  }
}

TEST(Kappa, GainFiniteDifference) {
  const Bench b = make_bench();
  const ComplexVector& h = b.s.h.values;
  Rng rng = make_stream(67);
  for (int dir = 0; dir < 3; ++dir) {
    ComplexVector d(h.size());
    fill_complex_normal(rng, d, 1.0);
    d *= h.norm() / d.norm();
    std::map<double, std::vector<PathParams>> cache;
    auto run = [&](double eps) -> const std::vector<PathParams>& {
      auto it = cache.find(eps);
      if (it == cache.end()) it = cache.emplace(eps, estimate_in_truth_order(b, h + eps * d)).first;
      return it->second;
    };
    for (int l = 0; l < 2; ++l) {
      const Complex pr = predicted_gain_shift(b.kit, l, d);
      const double re = oracle::richardson_derivative([&](double e) { return run(e)[l].gamma.real(); }, 1e-6);
      const double im = oracle::richardson_derivative([&](double e) { return run(e)[l].gamma.imag(); }, 1e-6);
      EXPECT_LT(std::abs(Complex(re, im) - pr), 0.01 * std::abs(pr)) << "path " << l << " direction " << dir;
    }
  }
}

TEST(Kappa, GainShiftMatchesPipelineAtHighSnr) {
  // First order is pinned by GainFiniteDifference; the gain picks up second-order terms
  // from the frequency errors, about 20% on the scattered path at 40 dB.
  const Bench b = make_bench();
  Scenario sc = b.s.sc;
  sc.n0 = noise_for_snr(b.s.paths, b.s.tr, sc, 70.0);
  double err2[2] = {0, 0}, act2[2] = {0, 0};
  for (int t = 0; t < 40; ++t) {
    Rng rng = make_stream(64, {static_cast<std::uint64_t>(t)});
    const BeamspaceTensor noisy = observe_and_estimate(b.s.h, sc, rng);
    const ComplexVector dh = noisy.values - b.s.h.values;
    const auto est = estimate_in_truth_order(b, noisy.values);
    for (int l = 0; l < 2; ++l) {
      const Complex actual = est[l].gamma - b.s.paths[l].gamma;
      err2[l] += std::norm(predicted_gain_shift(b.kit, l, dh) - actual);
      act2[l] += std::norm(actual);
    }
  }
  for (int l = 0; l < 2; ++l) EXPECT_LT(std::sqrt(err2[l] / act2[l]), 0.02) << "path " << l;
}

TEST(Analytic, Homogeneity) {
  const Bench b = make_bench();
  const auto base = analytic_param_rmse(b.kit, 1e-6, 32, 1.0);
  const auto doubled = analytic_param_rmse(b.kit, 1e-6, 32, 2.0);
  const auto quieter = analytic_param_rmse(b.kit, 1e-7, 32, 1.0);
  for (int l = 0; l < 2; ++l) {
    EXPECT_NEAR(base[l].phi_az / doubled[l].phi_az, std::sqrt(2.0), 1e-12);
    EXPECT_NEAR(base[l].tau / doubled[l].tau, std::sqrt(2.0), 1e-12);
    EXPECT_NEAR(base[l].gamma / quieter[l].gamma, std::sqrt(10.0), 1e-12);
    EXPECT_NEAR(base[l].tau_m, kSpeedOfLight * base[l].tau, 1e-20);
    // Closed form written out.
    EXPECT_NEAR(base[l].theta_el, std::sqrt(1e-6 * b.kit.kappa[l][3].squaredNorm() / 64.0),
                1e-12 * base[l].theta_el);
  }
  EXPECT_NEAR(analytic_pos_rmse(b.kit, 1e-6, 32, 1.0) / analytic_pos_rmse(b.kit, 1e-7, 32, 1.0),
              std::sqrt(10.0), 1e-12);
}

TEST(Psi, PositionFiniteDifference) {
  const Bench b = make_bench();
  const ComplexVector& h = b.s.h.values;
  Rng rng = make_stream(65);
  ComplexVector d(h.size());
  fill_complex_normal(rng, d, 1.0);
  d *= h.norm() / d.norm();
  const ArrayFrames fr = frames_of(b.s.sc);
  std::map<double, Vec3> cache;
  auto pos = [&](double eps) {
    auto it = cache.find(eps);
    if (it == cache.end()) {
      const auto est = estimate_in_truth_order(b, h + eps * d);
      it = cache.emplace(eps, localize(est, b.s.sc.p_t, {1.0, 1.0}, fr).p_hat).first;
    }
    return it->second;
  };
  const Vec3 pred = predicted_position_shift(b.kit, d);
  for (int a = 0; a < 3; ++a) {
    const double slope = oracle::richardson_derivative([&](double e) { return pos(e)(a); }, 1e-6);
    EXPECT_NEAR(slope, pred(a), 0.01 * pred.norm()) << "axis " << a;
  }
}

TEST(Psi, ZeroWeightMasksPaths) {
  Bench b = make_bench();
  PerturbationKit kit = b.kit;
  build_psi(kit, b.s.sc.p_t, frames_of(b.s.sc), {1.0, 0.0});
  const ComplexMatrix psi = kit.psi;
  for (auto& k : kit.kappa[1]) k.setZero();
  build_psi(kit, b.s.sc.p_t, frames_of(b.s.sc), {1.0, 0.0});
  EXPECT_EQ((kit.psi - psi).norm(), 0.0);
  EXPECT_GT(psi.norm(), 0.0);
}

TEST(Psi, SingleLosPathChainRule) {
  // With one LOS path the estimate is p_T - c tau f_R, so Psi is the chain rule through
  // tau and the two arrival angles. The direction derivatives come from central differences.
  Scenario sc = fixture::desk_scenario();
  sc.scatterers.clear();
  const fixture::Setup s = fixture::make_setup(sc);
  const ArrayFrames fr = frames_of(sc);
  PerturbationKit kit = build_xi_upsilon(s.paths, s.tr, sc.m[4], 0, sc.delta_f);
  build_kappa(kit, s.tr);
  build_psi(kit, sc.p_t, fr, {1.0});
  const PathParams& p = s.paths[0];
  const double e = 1e-6;
  const Vec3 f_r = direction_vector(p.theta_az, p.theta_el, fr.rx_facing);
  const Vec3 d_az = (direction_vector(p.theta_az + e, p.theta_el, fr.rx_facing) -
                     direction_vector(p.theta_az - e, p.theta_el, fr.rx_facing)) / (2 * e);
  const Vec3 d_el = (direction_vector(p.theta_az, p.theta_el + e, fr.rx_facing) -
                     direction_vector(p.theta_az, p.theta_el - e, fr.rx_facing)) / (2 * e);
  const double ct = kSpeedOfLight * p.tau;
  const auto& k = kit.kappa[0];
  const ComplexMatrix expect = -kSpeedOfLight * f_r.cast<Complex>() * k[4].adjoint() -
                               ct * d_az.cast<Complex>() * k[2].adjoint() -
                               ct * d_el.cast<Complex>() * k[3].adjoint();
  EXPECT_LT((kit.psi - expect).norm(), 1e-7 * expect.norm());
}

TEST(Kit, HybridDimensionIsIllPosed) {
  const fixture::Setup s = fixture::make_setup(fixture::desk_scenario());
  auto tr = s.tr;
  Rng rng = make_stream(66);
  tr[0] = make_custom_transform(oracle::random_matrix(rng, 3, 4));
  try {
    build_xi_upsilon(s.paths, tr, 64, 0, s.sc.delta_f);
    ADD_FAILURE() << "expected ill_posed_scenario";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ill_posed_scenario);
  }
}
