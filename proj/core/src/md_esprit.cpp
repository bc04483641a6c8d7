// SPDX-License-Identifier: Apache-2.0
#include "bsesprit/md_esprit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bsesprit/errors.hpp"
#include "bsesprit/kernels.hpp"

namespace bsesprit {

int default_l5(int m5) { return (m5 + 2) / 2; }

SmoothedMatrix spatial_smooth(const BeamspaceTensor& tensor, int l5) {
  const int m5 = tensor.dims[4];
  if (l5 < 1 || l5 > m5) {
    throw Error(ErrorCode::invalid_smoothing, "spatial_smooth: L5 outside [1, M5]");
  }
  SmoothedMatrix out;
  out.l5 = l5;
  out.k5 = m5 + 1 - l5;
  const Eigen::Index blocks = tensor.blocks();
  out.values.resize(blocks * out.k5, l5);
  for (Eigen::Index b = 0; b < blocks; ++b) {
    for (int l = 0; l < l5; ++l) {
      out.values.block(b * out.k5, l, out.k5, 1) = tensor.values.segment(b * m5 + l, out.k5);
    }
  }
  return out;
}

ComplexMatrix signal_subspace(const SmoothedMatrix& h, int l, EspritDiagnostics* diag) {
  if (l < 1 || l > std::min<Eigen::Index>(h.values.rows(), h.values.cols())) {
    throw Error(ErrorCode::invalid_input, "signal_subspace: L out of range");
  }
  const kernels::SvdResult svd = kernels::svd_thin(h.values);
  if (diag) {
    const RealVector& s = svd.singular_values;
    diag->subspace_gap = l < s.size() && s(l) > 0.0 ? s(l - 1) / s(l)
                                                     : std::numeric_limits<double>::infinity();
    diag->no_gap_warning = diag->subspace_gap < 1.0 + 1e-12;
  }
  return svd.left.leftCols(l);
}

ComplexMatrix signal_subspace(const BeamspaceTensor& tensor, int l5, int l, SubspaceMethod method,
                              const FastSvdOptions& fast, EspritDiagnostics* diag) {
  if (method == SubspaceMethod::dense) return signal_subspace(spatial_smooth(tensor, l5), l, diag);
  const HankelBlockOperator op(tensor, l5);
  Bidiagonal bd;
  ComplexMatrix us = fast_signal_subspace(op, l, fast, &bd);
  if (diag) {
    const RealSvd j = bidiag_svd(bd.a, bd.b);
    diag->lanczos_steps = bd.steps_run;
    diag->subspace_gap = l < j.s.size() && j.s(l) > 0.0 ? j.s(l - 1) / j.s(l)
                                                        : std::numeric_limits<double>::infinity();
    diag->no_gap_warning = diag->subspace_gap < 1.0 + 1e-12;
  }
  return us;
}

ComplexMatrix gamma_n(const ComplexMatrix& us, const LiftedPair& sel, double rtol, int* rank) {
  const ComplexMatrix x1 = sel.first.apply(us);
  const ComplexMatrix x2 = sel.second.apply(us);
  if (rank) *rank = static_cast<int>(kernels::numerical_rank(x1, rtol));
  return kernels::pinv(x1, rtol) * x2;
}

namespace {

double min_separation(const ComplexVector& lambda) {
  double sep = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    for (Eigen::Index k = i + 1; k < lambda.size(); ++k) {
      sep = std::min(sep, std::abs(lambda(i) - lambda(k)));
    }
  }
  return sep;
}

}  // namespace

PairingResult auto_pair(const std::array<ComplexMatrix, 5>& gammas, Rng& rng,
                        const std::optional<std::array<double, 5>>& beta, double sep_tol,
                        int redraws) {
  const Eigen::Index l = gammas[0].rows();
  for (const auto& g : gammas) {
    if (g.rows() != l || g.cols() != l) {
      throw Error(ErrorCode::shape_mismatch, "auto_pair: Gamma matrices must be L x L");
    }
  }
  PairingResult out;
  kernels::EigResult eig;
  double best_rel = -1.0;
  for (int attempt = 0; attempt <= redraws; ++attempt) {
    std::array<double, 5> bt{};
    if (attempt == 0 && beta) {
      bt = *beta;
    } else {
      for (double& x : bt) x = uniform01(rng);
    }
    ComplexMatrix k = ComplexMatrix::Zero(l, l);
    for (int n = 0; n < 5; ++n) k += bt[n] * gammas[n];
    kernels::EigResult trial = kernels::eig_general(k);
    const double maxabs = trial.eigenvalues.cwiseAbs().maxCoeff();
    const double sep = min_separation(trial.eigenvalues);
    const double rel = maxabs > 0.0 ? sep / maxabs : 0.0;
    out.draws = attempt + 1;
    if (rel > best_rel) {
      best_rel = rel;
      eig = std::move(trial);
      out.beta = bt;
    }
    if (sep >= sep_tol * maxabs && maxabs > 0.0) break;
  }
  out.separation = best_rel;
  if (!(best_rel >= sep_tol)) {
    throw Error(ErrorCode::pairing_failure,
                "auto_pair: eigenvalues of K stay clustered after " + std::to_string(out.draws) +
                    " draws (relative separation " + std::to_string(best_rel) + ")");
  }
  out.e = eig.eigenvectors;
  Eigen::PartialPivLU<ComplexMatrix> lu(out.e);
  out.freqs.assign(static_cast<std::size_t>(l), AngularFreqs{});
  for (int n = 0; n < 5; ++n) {
    const ComplexMatrix phi = lu.solve(gammas[n] * out.e);
    for (Eigen::Index i = 0; i < l; ++i) {
      out.freqs[static_cast<std::size_t>(i)][static_cast<std::size_t>(n)] = std::arg(phi(i, i));
    }
  }
  return out;
}

ComplexVector estimate_gains(const std::vector<AngularFreqs>& freqs,
                             const std::array<BeamTransform, 4>& transforms,
                             const BeamspaceTensor& h, double rtol, double* condition) {
  const ComplexMatrix b = beamspace_manifold(freqs, transforms, h.dims[4]);
  if (b.rows() != h.size()) {
    throw Error(ErrorCode::shape_mismatch, "estimate_gains: manifold rows != tensor size");
  }
  if (condition) {
    const kernels::SvdResult svd = kernels::svd_thin(b);
    const RealVector& s = svd.singular_values;
    *condition = s(s.size() - 1) > 0.0 ? s(0) / s(s.size() - 1)
                                       : std::numeric_limits<double>::infinity();
  }
  return kernels::pinv(b, rtol) * h.values;
}

BeamspaceTensor hybrid_lift(const BeamspaceTensor& tensor, int n, const ComplexMatrix& t) {
  if (n < 1 || n > 4) throw Error(ErrorCode::invalid_input, "hybrid_lift: n must be 1..4");
  const int mode = n - 1;
  if (t.cols() != tensor.dims[mode]) {
    throw Error(ErrorCode::shape_mismatch, "hybrid_lift: T columns != mode size");
  }
  const ComplexMatrix th = t.adjoint();
  if (kernels::numerical_rank(th, 1e-10) < t.rows()) {
    throw Error(ErrorCode::cannot_lift, "hybrid_lift: T is not full row rank");
  }
  const ComplexMatrix lift = kernels::pinv(th, 1e-10);
  std::vector<int> dims(tensor.dims.begin(), tensor.dims.end());
  const LiftedSelector op(mode, dims, lift);
  BeamspaceTensor out;
  out.dims = tensor.dims;
  out.dims[mode] = static_cast<int>(t.rows());
  out.values = op.apply(tensor.values);
  return out;
}

EspritEstimate esprit_pipeline(const BeamspaceTensor& noisy,
                               const std::array<BeamTransform, 4>& transforms, int l, int l5,
                               const EspritOptions& opts) {
  if (l < 1) throw Error(ErrorCode::invalid_input, "esprit_pipeline: L < 1");
  const int m5 = noisy.dims[4];
  if (l5 <= 0) l5 = default_l5(m5);
  const int k5 = m5 + 1 - l5;
  if (l5 < 1 || l5 > m5 || k5 < l + 1 || l5 < l) {
    throw Error(ErrorCode::invalid_smoothing,
                "esprit_pipeline: need K5 >= L + 1 and L5 >= L (K5=" + std::to_string(k5) +
                    ", L5=" + std::to_string(l5) + ")");
  }

  EspritEstimate est;
  BeamspaceTensor work = noisy;
  std::vector<SelectorPair> per_dim;
  for (int d = 0; d < 4; ++d) {
    const BeamTransform& tr = transforms[d];
    if (tr.t.cols() != noisy.dims[d]) {
      throw Error(ErrorCode::shape_mismatch, "esprit_pipeline: transform does not match tensor");
    }
    if (tr.m() < tr.n() || tr.selectors.first.size() == 0) {
      work = hybrid_lift(work, d + 1, tr.t);
      per_dim.push_back(element_selectors(tr.m()));
      est.diagnostics.lifted[d] = true;
    } else {
      per_dim.push_back(tr.selectors);
    }
  }

  const ComplexMatrix us =
      signal_subspace(work, l5, l, opts.method, opts.fast, &est.diagnostics);

  std::vector<int> stack_dims = {work.dims[0], work.dims[1], work.dims[2], work.dims[3], k5};
  std::array<ComplexMatrix, 5> gammas;
  for (int n = 1; n <= 5; ++n) {
    const LiftedPair sel = lifted_selectors(n, stack_dims, per_dim);
    int rank = 0;
    gammas[n - 1] = gamma_n(us, sel, opts.pinv_rtol, &rank);
    est.diagnostics.gamma_rank[n - 1] = rank;
  }

  Rng rng = make_stream(opts.pairing_seed, {0x61757470ULL});
  const PairingResult pr = auto_pair(gammas, rng, opts.beta, opts.sep_tol, opts.beta_redraws);
  est.freqs = pr.freqs;
  est.diagnostics.pairing_separation = pr.separation;
  est.diagnostics.beta_draws = pr.draws;

  for (std::size_t i = 0; i < est.freqs.size(); ++i) {
    bool clamped = false;
    est.params.push_back(from_angular_clamped(est.freqs[i], opts.delta_f, clamped));
    if (clamped) est.diagnostics.clamped_paths.push_back(static_cast<int>(i));
  }

  est.gains = estimate_gains(est.freqs, transforms, noisy, opts.pinv_rtol,
                             &est.diagnostics.gain_condition);
  for (std::size_t i = 0; i < est.params.size(); ++i) {
    est.params[i].gamma = est.gains(static_cast<Eigen::Index>(i));
  }
  const ComplexMatrix b = beamspace_manifold(est.freqs, transforms, m5);
  const double hn = noisy.values.norm();
  est.diagnostics.residual = hn > 0.0 ? (noisy.values - b * est.gains).norm() / hn : 0.0;
  return est;
}

}  // namespace bsesprit
