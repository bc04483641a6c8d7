// SPDX-License-Identifier: Apache-2.0
#include "bsesprit/tensor_esprit.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "bsesprit/errors.hpp"
#include "bsesprit/kernels.hpp"

namespace bsesprit {

namespace {

using Factors = std::array<ComplexMatrix, 5>;

struct Layout {
  std::array<Eigen::Index, 5> dims{};
  Eigen::Index left(int n) const {
    Eigen::Index p = 1;
    for (int k = 0; k < n; ++k) p *= dims[k];
    return p;
  }
  Eigen::Index right(int n) const {
    Eigen::Index p = 1;
    for (int k = n + 1; k < 5; ++k) p *= dims[k];
    return p;
  }
};

ComplexMatrix conj_kr(const Factors& f, int from, int to, Eigen::Index l) {
  if (from >= to) return ComplexMatrix::Ones(1, l);
  std::vector<ComplexMatrix> parts;
  for (int k = from; k < to; ++k) parts.push_back(f[k].conjugate());
  return khatri_rao(parts);
}

// M[i, l] = sum over the other indices of X * prod_{k != n} conj(U_k[i_k, l]).
ComplexMatrix mttkrp(const ComplexVector& x, const Layout& lay, const Factors& f, int n) {
  const Eigen::Index l = f[0].cols();
  const Eigen::Index pl = lay.left(n);
  const Eigen::Index pr = lay.right(n);
  const Eigen::Index dn = lay.dims[n];
  const ComplexMatrix lc = conj_kr(f, 0, n, l);
  const ComplexMatrix rc = conj_kr(f, n + 1, 5, l);
  ComplexMatrix m = ComplexMatrix::Zero(dn, l);
  ComplexMatrix tmp(dn, l);
  for (Eigen::Index a = 0; a < pl; ++a) {
    Eigen::Map<const ComplexMatrix> slab(x.data() + a * dn * pr, pr, dn);
    tmp.noalias() = slab.transpose() * rc;
    m.array() += tmp.array().rowwise() * lc.row(a).array();
  }
  return m;
}

ComplexMatrix mode_gram(const ComplexVector& x, const Layout& lay, int n) {
  const Eigen::Index pl = lay.left(n);
  const Eigen::Index pr = lay.right(n);
  const Eigen::Index dn = lay.dims[n];
  ComplexMatrix g = ComplexMatrix::Zero(dn, dn);
  for (Eigen::Index a = 0; a < pl; ++a) {
    Eigen::Map<const ComplexMatrix> slab(x.data() + a * dn * pr, pr, dn);
    g.noalias() += slab.transpose() * slab.conjugate();
  }
  return g;
}

ComplexMatrix hadamard_gram(const Factors& f, int skip) {
  const Eigen::Index l = f[0].cols();
  ComplexMatrix g = ComplexMatrix::Ones(l, l);
  for (int k = 0; k < 5; ++k) {
    if (k == skip) continue;
    g.array() *= (f[k].adjoint() * f[k]).array();
  }
  return g;
}

void normalize(Factors& f, ComplexVector& w) {
  const Eigen::Index l = f[0].cols();
  w = ComplexVector::Ones(l);
  for (int k = 0; k < 5; ++k) {
    for (Eigen::Index c = 0; c < l; ++c) {
      const double nc = f[k].col(c).norm();
      if (nc > 0.0) {
        f[k].col(c) /= nc;
        w(c) *= nc;
      }
    }
  }
}

// ||X - X_hat|| / ||X|| for weights w and unit-norm factors.
double relative_residual(const ComplexVector& x, double xnorm2, const Layout& lay,
                         const Factors& f, const ComplexVector& w) {
  const ComplexMatrix m = mttkrp(x, lay, f, 4);
  Complex inner(0.0, 0.0);  // <X, X_hat> = sum_l conj(w_l) sum_i conj(U4[i,l]) M[i,l]
  for (Eigen::Index c = 0; c < w.size(); ++c) inner += std::conj(w(c)) * f[4].col(c).dot(m.col(c));
  const ComplexMatrix g = hadamard_gram(f, -1);
  const double model2 = std::real(w.dot(g * w));
  double r2 = std::max(xnorm2 - 2.0 * std::real(inner) + model2, 0.0);
  if (r2 < 1e-10 * xnorm2) {
    // The expanded form cancels below ~sqrt(eps); reconstruct explicitly instead.
    std::vector<ComplexMatrix> parts(f.begin(), f.end());
    r2 = (x - khatri_rao(parts) * w).squaredNorm();
  }
  return xnorm2 > 0.0 ? std::sqrt(r2 / xnorm2) : std::sqrt(r2);
}

Factors init_hosvd(const ComplexVector& x, const Layout& lay, Eigen::Index l, Rng& rng) {
  Factors f;
  for (int n = 0; n < 5; ++n) {
    const ComplexMatrix g = mode_gram(x, lay, n);
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(g);
    const Eigen::Index dn = lay.dims[n];
    f[n] = random_complex_matrix(rng, dn, l);
    const Eigen::Index take = std::min(dn, l);
    for (Eigen::Index c = 0; c < take; ++c) f[n].col(c) = es.eigenvectors().col(dn - 1 - c);
  }
  return f;
}

Factors init_random(const Layout& lay, Eigen::Index l, Rng& rng) {
  Factors f;
  for (int n = 0; n < 5; ++n) f[n] = random_complex_matrix(rng, lay.dims[n], l);
  return f;
}

bool factors_finite(const Factors& f) {
  for (const auto& m : f) {
    if (!m.allFinite()) return false;
  }
  return true;
}

CpModel run_als(const ComplexVector& x, const Layout& lay, Factors f, const CpOptions& opts) {
  const double xnorm2 = x.squaredNorm();
  const Eigen::Index l = f[0].cols();
  CpModel model;
  ComplexVector w;
  normalize(f, w);
  double fit = relative_residual(x, xnorm2, lay, f, w);
  model.fit_history.push_back(fit);
  Factors prev = f;
  ComplexVector prev_w = w;
  for (int it = 1; it <= opts.max_iter; ++it) {
    // Weights live in factor 0 during the sweep.
    f[0] = f[0] * w.asDiagonal();
    for (int n = 0; n < 5; ++n) {
      const ComplexMatrix m = mttkrp(x, lay, f, n);
      // Z^T Z^* is the conjugate of the Hadamard product of factor Grams.
      const ComplexMatrix g = hadamard_gram(f, n).conjugate();
      f[n] = m * kernels::pinv(g, 1e-14);
    }
    normalize(f, w);
    double new_fit = relative_residual(x, xnorm2, lay, f, w);

    if (opts.line_search && it > 1) {
      const double step = std::pow(static_cast<double>(it), 1.0 / 3.0);
      Factors cand;
      Factors a = f;
      Factors b = prev;
      a[0] = a[0] * w.asDiagonal();
      b[0] = b[0] * prev_w.asDiagonal();
      for (int n = 0; n < 5; ++n) cand[n] = b[n] + step * (a[n] - b[n]);
      ComplexVector cw;
      normalize(cand, cw);
      if (factors_finite(cand)) {
        const double cand_fit = relative_residual(x, xnorm2, lay, cand, cw);
        if (cand_fit < new_fit) {
          f = std::move(cand);
          w = std::move(cw);
          new_fit = cand_fit;
        }
      }
    }
    if (!factors_finite(f) || !std::isfinite(new_fit)) {
      model.fit = std::numeric_limits<double>::infinity();
      model.iterations = it;
      return model;
    }
    model.fit_history.push_back(new_fit);
    model.iterations = it;
    const double change = std::abs(fit - new_fit);
    prev = f;
    prev_w = w;
    fit = new_fit;
    if (change < opts.tol || fit < opts.tol) break;
  }
  model.factors = std::move(f);
  model.weights = std::move(w);
  model.fit = fit;
  (void)l;
  return model;
}

}  // namespace

CpModel cp_als(const BeamspaceTensor& tensor, int l, const CpOptions& opts) {
  if (l < 1) throw Error(ErrorCode::invalid_input, "cp_als: L < 1");
  Layout lay;
  for (int k = 0; k < 5; ++k) lay.dims[k] = tensor.dims[k];
  Rng rng = make_stream(opts.seed, {static_cast<std::uint64_t>(l)});
  CpModel best;
  best.fit = std::numeric_limits<double>::infinity();
  std::vector<double> fits;
  const int restarts = std::max(opts.restarts, 1);
  for (int r = 0; r < restarts; ++r) {
    Factors init = r == 0 ? init_hosvd(tensor.values, lay, l, rng) : init_random(lay, l, rng);
    CpModel m = run_als(tensor.values, lay, std::move(init), opts);
    m.restart = r;
    fits.push_back(m.fit);
    if (m.fit < best.fit) best = std::move(m);
    if (best.fit < opts.tol) break;
  }
  if (!std::isfinite(best.fit)) {
    std::string msg = "cp_als: every restart diverged; fits:";
    for (double f : fits) msg += " " + std::to_string(f);
    throw Error(ErrorCode::decomposition_failure, msg);
  }
  return best;
}

ComplexVector cp_reconstruct(const CpModel& model) {
  std::vector<ComplexMatrix> parts(model.factors.begin(), model.factors.end());
  return khatri_rao(parts) * model.weights;
}

EspritEstimate tensor_esprit_pipeline(const BeamspaceTensor& noisy,
                                      const std::array<BeamTransform, 4>& transforms, int l,
                                      double delta_f, const CpOptions& opts) {
  EspritEstimate est;
  BeamspaceTensor work = noisy;
  std::array<SelectorPair, 5> sel;
  for (int d = 0; d < 4; ++d) {
    const BeamTransform& tr = transforms[d];
    if (tr.m() < tr.n() || tr.selectors.first.size() == 0) {
      work = hybrid_lift(work, d + 1, tr.t);
      sel[d] = element_selectors(tr.m());
      est.diagnostics.lifted[d] = true;
    } else {
      sel[d] = tr.selectors;
    }
  }
  sel[4] = element_selectors(noisy.dims[4]);

  const CpModel cp = cp_als(work, l, opts);
  est.freqs.assign(static_cast<std::size_t>(l), AngularFreqs{});
  for (int n = 0; n < 5; ++n) {
    const ComplexMatrix x1 = sel[n].first * cp.factors[n];
    const ComplexMatrix x2 = sel[n].second * cp.factors[n];
    for (int c = 0; c < l; ++c) {
      // Per-column Gamma = (L2 u)^+ (L1 u) = e^{-j omega}; CP columns already pair the paths.
      const Complex num = x2.col(c).dot(x1.col(c));
      const double den = x2.col(c).squaredNorm();
      const Complex g = den > 0.0 ? num / den : Complex(1.0, 0.0);
      est.freqs[static_cast<std::size_t>(c)][static_cast<std::size_t>(n)] = -std::arg(g);
    }
  }
  for (std::size_t i = 0; i < est.freqs.size(); ++i) {
    bool clamped = false;
    est.params.push_back(from_angular_clamped(est.freqs[i], delta_f, clamped));
    if (clamped) est.diagnostics.clamped_paths.push_back(static_cast<int>(i));
  }
  est.gains = estimate_gains(est.freqs, transforms, noisy, kernels::kDefaultPinvRtol,
                             &est.diagnostics.gain_condition);
  for (std::size_t i = 0; i < est.params.size(); ++i) {
    est.params[i].gamma = est.gains(static_cast<Eigen::Index>(i));
  }
  est.diagnostics.residual = cp.fit;
  return est;
}

}  // namespace bsesprit
