// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <limits>

#include "bsesprit/errors.hpp"
#include "bsesprit/tensor_esprit.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace bsesprit;

namespace {

double congruence(const ComplexVector& a, const ComplexVector& b) {
  return std::abs(a.dot(b)) / (a.norm() * b.norm());
}

// Ground-truth factor matrices B_1..B_4, A_5 for a path list.
std::array<ComplexMatrix, 5> truth_factors(const std::vector<PathParams>& paths,
                                           const std::array<BeamTransform, 4>& tr, const Scenario& sc) {
  std::array<ComplexMatrix, 5> f;
  const auto freqs = fixture::freqs_of(paths, sc.delta_f);
  for (int n = 0; n < 5; ++n) {
    std::vector<double> om;
    for (const auto& w : freqs) om.push_back(w[n]);
    f[n] = n < 4 ? beam_factor(tr[n], om) : steering_matrix(sc.m[4], om);
  }
  return f;
}

}  // namespace

TEST(CpAls, ExactRankOne) {
  Rng rng = make_stream(51);
  std::array<ComplexMatrix, 5> v;
  const std::array<int, 5> dims = {3, 4, 2, 3, 5};
  for (int n = 0; n < 5; ++n) v[n] = oracle::random_matrix(rng, dims[n], 1);
  BeamspaceTensor t;
  t.dims = dims;
  t.values = oracle::khatri_rao_naive({v.begin(), v.end()});
  const CpModel m = cp_als(t, 1);
  EXPECT_LT(m.fit, 1e-10);
  for (int n = 0; n < 5; ++n) {
    EXPECT_NEAR(m.factors[n].col(0).norm(), 1.0, 1e-12);
    EXPECT_GT(congruence(m.factors[n].col(0), v[n].col(0)), 1.0 - 1e-10);
  }
  EXPECT_LT((cp_reconstruct(m) - t.values).norm(), 1e-10 * t.values.norm());
}

TEST(CpAls, NoiselessTwoPathFactorsMatchManifold) {
  const fixture::Setup s = fixture::make_setup(fixture::desk_scenario());
  CpOptions o;
  o.tol = 1e-14;
  o.max_iter = 3000;
  const CpModel m = cp_als(s.h, 2, o);
  EXPECT_LT(m.fit, 1e-8);
  const auto truth = truth_factors(s.paths, s.tr, s.sc);
  // Resolve the column permutation on the delay factor.
  const bool swap = congruence(m.factors[4].col(0), truth[4].col(0)) <
                    congruence(m.factors[4].col(0), truth[4].col(1));
  for (int n = 0; n < 5; ++n) {
    for (int l = 0; l < 2; ++l) {
      EXPECT_GT(congruence(m.factors[n].col(swap ? 1 - l : l), truth[n].col(l)), 1.0 - 1e-8)
          << "mode " << n << " path " << l;
      EXPECT_NEAR(m.factors[n].col(l).norm(), 1.0, 1e-12);
    }
  }
}

TEST(CpAls, NoisyFitIsMonotoneAndMatchesResidual) {
  const fixture::Setup s = fixture::make_setup(fixture::desk_scenario());
  Scenario sc = s.sc;
  sc.n0 = noise_for_snr(s.paths, s.tr, sc, 10.0);
  Rng rng = make_stream(52);
  const BeamspaceTensor noisy = observe_and_estimate(s.h, sc, rng);
  CpOptions o;
  o.line_search = false;
  o.restarts = 1;
  const CpModel m = cp_als(noisy, 2, o);
  ASSERT_GE(m.fit_history.size(), 2u);
  for (std::size_t i = 1; i < m.fit_history.size(); ++i) {
    EXPECT_LE(m.fit_history[i], m.fit_history[i - 1] * (1.0 + 1e-12));
  }
  const double resid = (noisy.values - cp_reconstruct(m)).norm() / noisy.values.norm();
  EXPECT_NEAR(resid, m.fit, 1e-10);
}

TEST(CpAls, NonFiniteInputFails) {
  BeamspaceTensor t;
  t.dims = {2, 2, 2, 2, 2};
  t.values = ComplexVector::Ones(32);
  t.values(3) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(cp_als(t, 1), Error);
}

TEST(TensorPipeline, NoiselessSinglePath) {
  Scenario sc = fixture::desk_scenario();
  sc.scatterers.clear();
  const fixture::Setup s = fixture::make_setup(sc);
  const EspritEstimate est = tensor_esprit_pipeline(s.h, s.tr, 1, sc.delta_f);
  const AngularFreqs w = to_angular(s.paths[0], sc.delta_f);
  for (int n = 0; n < 5; ++n) EXPECT_NEAR(wrap_angle(est.freqs[0][n] - w[n]), 0.0, 1e-8);
  EXPECT_LT(std::abs(est.gains(0) - s.paths[0].gamma), 1e-8 * std::abs(s.paths[0].gamma));
}

TEST(TensorPipeline, NoiselessTwoPathsAndUnitCircle) {
  const fixture::Setup s = fixture::make_setup(fixture::desk_scenario(BeamKind::directional));
  const EspritEstimate est = tensor_esprit_pipeline(s.h, s.tr, 2, s.sc.delta_f);
  const auto truth = fixture::freqs_of(s.paths, s.sc.delta_f);
  const bool swap = oracle::wrapped_distance2(est.freqs[0], truth[0]) >
                    oracle::wrapped_distance2(est.freqs[0], truth[1]);
  for (int l = 0; l < 2; ++l)
    for (int n = 0; n < 5; ++n)
      EXPECT_NEAR(wrap_angle(est.freqs[swap ? 1 - l : l][n] - truth[l][n]), 0.0, 1e-7);

  // Per-column shift ratios of the CP factors sit on the unit circle.
  const CpModel m = cp_als(s.h, 2);
  for (int n = 0; n < 4; ++n) {
    for (int c = 0; c < 2; ++c) {
      const ComplexVector x1 = s.tr[n].selectors.first * m.factors[n].col(c);
      const ComplexVector x2 = s.tr[n].selectors.second * m.factors[n].col(c);
      EXPECT_NEAR(std::abs(x2.dot(x1) / x2.squaredNorm()), 1.0, 1e-6);
    }
  }
}
