// SPDX-License-Identifier: Apache-2.0
#include "bsesprit/fast_svd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "bsesprit/errors.hpp"

namespace bsesprit {

HankelBlockOperator::HankelBlockOperator(const BeamspaceTensor& tensor, int l5)
    : blocks_(tensor.blocks()), m5_(tensor.dims[4]), l5_(l5) {
  build(tensor.values);
}

HankelBlockOperator::HankelBlockOperator(const ComplexVector& h, Eigen::Index blocks, int m5,
                                         int l5)
    : blocks_(blocks), m5_(m5), l5_(l5) {
  build(h);
}

void HankelBlockOperator::build(const ComplexVector& h) {
  if (l5_ < 1 || l5_ > m5_) {
    throw Error(ErrorCode::invalid_smoothing, "HankelBlockOperator: L5 outside [1, M5]");
  }
  if (h.size() != blocks_ * m5_) {
    throw Error(ErrorCode::shape_mismatch, "HankelBlockOperator: source length != blocks * M5");
  }
  k5_ = m5_ + 1 - l5_;
  nfft_ = kernels::next_pow2(static_cast<std::size_t>(m5_));
  source_ = h;
  spectra_.resize(static_cast<Eigen::Index>(nfft_), blocks_);
  kernels::Fft fft(nfft_);
  ComplexVector spec;
  double fro2 = 0.0;
  for (Eigen::Index b = 0; b < blocks_; ++b) {
    const ComplexVector blk = h.segment(b * m5_, m5_);
    fft.forward(blk, spec);
    spectra_.col(b) = spec;
    for (int i = 0; i < m5_; ++i) {
      // Entry i appears once for every (k, l) with k + l = i.
      const int count = std::min({i + 1, k5_, l5_, m5_ - i});
      fro2 += count * std::norm(blk(i));
    }
  }
  fro_ = std::sqrt(fro2);
}

// Forward: y_b[k] = sum_l h_b[k + l] x[l] = (h_b * reverse(x))[k + L5 - 1].
// A circular transform of length >= M5 leaves those taps free of wrap-around.
ComplexVector HankelBlockOperator::apply(const ComplexVector& x) const {
  if (x.size() != l5_) throw Error(ErrorCode::shape_mismatch, "hankel_matvec: |x| != L5");
  kernels::Fft fft(nfft_);
  ComplexVector xr = x.reverse();
  ComplexVector xs, prod, conv;
  fft.forward(xr, xs);
  ComplexVector y(rows());
  for (Eigen::Index b = 0; b < blocks_; ++b) {
    prod = spectra_.col(b).cwiseProduct(xs);
    fft.inverse(prod, conv);
    y.segment(b * k5_, k5_) = conv.segment(l5_ - 1, k5_);
  }
  return y;
}

// Adjoint: z[l] = sum_b sum_k conj(h_b[k + l]) u_b[k]
//               = conj(sum_b (h_b * conj(reverse(u_b)))[l + K5 - 1]).
ComplexVector HankelBlockOperator::apply_adjoint(const ComplexVector& y) const {
  if (y.size() != rows()) {
    throw Error(ErrorCode::shape_mismatch, "hankel_matvec: |y| != blocks * K5");
  }
  kernels::Fft fft(nfft_);
  ComplexVector acc = ComplexVector::Zero(static_cast<Eigen::Index>(nfft_));
  ComplexVector ur, us, conv;
  for (Eigen::Index b = 0; b < blocks_; ++b) {
    ur = y.segment(b * k5_, k5_).reverse().conjugate();
    fft.forward(ur, us);
    acc += spectra_.col(b).cwiseProduct(us);
  }
  fft.inverse(acc, conv);
  return conv.segment(k5_ - 1, l5_).conjugate();
}

ComplexMatrix HankelBlockOperator::dense() const {
  ComplexMatrix h(rows(), l5_);
  for (Eigen::Index b = 0; b < blocks_; ++b) {
    for (int k = 0; k < k5_; ++k) {
      for (int l = 0; l < l5_; ++l) h(b * k5_ + k, l) = source_(b * m5_ + k + l);
    }
  }
  return h;
}

ComplexVector hankel_matvec(const HankelBlockOperator& op, const ComplexVector& x, bool adjoint) {
  return adjoint ? op.apply_adjoint(x) : op.apply(x);
}

namespace {

void reorthogonalize(ComplexVector& w, const ComplexMatrix& basis, Eigen::Index count) {
  if (count == 0) return;
  const auto q = basis.leftCols(count);
  for (int pass = 0; pass < 2; ++pass) {
    const ComplexVector c = q.adjoint() * w;
    w.noalias() -= q * c;
  }
}

// Unit vector orthogonal to the first count columns of basis.
ComplexVector orthogonal_completion(const ComplexMatrix& basis, Eigen::Index count) {
  const Eigen::Index n = basis.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    ComplexVector e = ComplexVector::Zero(n);
    e(i) = 1.0;
    reorthogonalize(e, basis, count);
    const double ne = e.norm();
    if (ne > 0.5) return e / ne;
  }
  throw Error(ErrorCode::numeric_failure, "lanczos_bidiag: no orthogonal completion");
}

}  // namespace

Bidiagonal lanczos_bidiag(const HankelBlockOperator& op, int steps, Reorth reorth,
                          const ComplexVector* start, double breakdown_tol) {
  const Eigen::Index n = op.cols();
  const Eigen::Index m = op.rows();
  if (steps < 1 || steps > n) {
    throw Error(ErrorCode::invalid_input, "lanczos_bidiag: steps must lie in [1, L5]");
  }
  ComplexVector v;
  if (start) {
    if (start->size() != n) throw Error(ErrorCode::shape_mismatch, "lanczos_bidiag: start length");
    v = *start;
  } else {
    v = ComplexVector::Ones(n);
  }
  if (v.norm() == 0.0) throw Error(ErrorCode::invalid_input, "lanczos_bidiag: zero start vector");
  v /= v.norm();

  Bidiagonal bd;
  bd.u_frame = ComplexMatrix::Zero(m, steps);
  bd.v_frame = ComplexMatrix::Zero(n, steps);
  RealVector a = RealVector::Zero(steps);
  RealVector b = RealVector::Zero(std::max(steps - 1, 0));
  const double tol = breakdown_tol * std::max(op.frobenius_norm(), std::numeric_limits<double>::min());

  bd.v_frame.col(0) = v;
  ComplexVector u_prev = ComplexVector::Zero(m);
  double b_prev = 0.0;
  int run = steps;
  for (int l = 0; l < steps; ++l) {
    ComplexVector u = op.apply(bd.v_frame.col(l)) - b_prev * u_prev;
    if (reorth == Reorth::full) reorthogonalize(u, bd.u_frame, l);
    const double alpha = u.norm();
    if (alpha <= tol) {
      // H maps span(V) into span(U): complete U so that J = U^H H V still holds.
      bd.u_frame.col(l) = orthogonal_completion(bd.u_frame, l);
      a(l) = 0.0;
      run = l + 1;
      bd.invariant_subspace = true;
      break;
    }
    u /= alpha;
    bd.u_frame.col(l) = u;
    a(l) = alpha;
    if (l == steps - 1) break;
    ComplexVector w = op.apply_adjoint(u) - alpha * bd.v_frame.col(l);
    if (reorth == Reorth::full) reorthogonalize(w, bd.v_frame, l + 1);
    const double beta = w.norm();
    if (beta <= tol) {
      run = l + 1;
      bd.invariant_subspace = true;
      break;
    }
    b(l) = beta;
    bd.v_frame.col(l + 1) = w / beta;
    u_prev = u;
    b_prev = beta;
  }
  if (reorth == Reorth::none) {
    // Without reorthogonalization orthogonality is lost gradually rather than by breakdown.
    for (int l = 0; l < run; ++l) {
      if (!bd.u_frame.col(l).allFinite()) {
        throw Error(ErrorCode::numeric_failure, "lanczos_bidiag: non-finite basis", l);
      }
    }
  }
  bd.steps_run = run;
  bd.a = a.head(run);
  bd.b = b.head(std::max(run - 1, 0));
  bd.u_frame.conservativeResize(Eigen::NoChange, run);
  bd.v_frame.conservativeResize(Eigen::NoChange, run);
  return bd;
}

namespace {

struct Givens {
  double c;
  double s;
  double r;
};

// [c s; -s c] [y; z] = [r; 0]
Givens make_givens(double y, double z) {
  const double r = std::hypot(y, z);
  if (r == 0.0) return {1.0, 0.0, 0.0};
  return {y / r, z / r, r};
}

// col_i <- c col_i + s col_j ; col_j <- -s col_i + c col_j
void rotate_columns(RealMatrix& m, Eigen::Index i, Eigen::Index j, double c, double s) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double xi = m(r, i);
    const double xj = m(r, j);
    m(r, i) = c * xi + s * xj;
    m(r, j) = -s * xi + c * xj;
  }
}

}  // namespace

RealSvd bidiag_svd(const RealVector& a, const RealVector& b, int max_sweeps) {
  const Eigen::Index n = a.size();
  if (n < 1) throw Error(ErrorCode::invalid_input, "bidiag_svd: empty bidiagonal");
  if (b.size() != n - 1) throw Error(ErrorCode::shape_mismatch, "bidiag_svd: |b| != |a| - 1");
  if (!a.allFinite() || !b.allFinite()) {
    throw Error(ErrorCode::invalid_input, "bidiag_svd: non-finite entries");
  }
  RealVector d = a;
  RealVector e = b;
  RealMatrix u = RealMatrix::Identity(n, n);
  RealMatrix v = RealMatrix::Identity(n, n);
  const double eps = std::numeric_limits<double>::epsilon();
  double anorm = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    anorm = std::max(anorm, std::abs(d(i)) + (i < n - 1 ? std::abs(e(i)) : 0.0));
  }
  const double dtol = eps * anorm;
  const int max_iter = max_sweeps > 0 ? max_sweeps : static_cast<int>(75 * n * n + 100);

  int iter = 0;
  for (; iter < max_iter; ++iter) {
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
      if (std::abs(e(i)) <= eps * (std::abs(d(i)) + std::abs(d(i + 1)))) e(i) = 0.0;
    }
    Eigen::Index q = n - 1;
    while (q > 0 && e(q - 1) == 0.0) --q;
    if (q == 0) break;
    Eigen::Index p = q - 1;
    while (p > 0 && e(p - 1) != 0.0) --p;

    bool chased = false;
    for (Eigen::Index i = p; i < q; ++i) {
      if (std::abs(d(i)) > dtol) continue;
      // Zero diagonal inside the block: rotate row i's superdiagonal out to the right.
      d(i) = 0.0;
      double f = e(i);
      e(i) = 0.0;
      for (Eigen::Index j = i + 1; j <= q && f != 0.0; ++j) {
        const Givens g = make_givens(d(j), f);
        d(j) = g.r;
        rotate_columns(u, j, i, g.c, g.s);
        if (j < q) {
          f = -g.s * e(j);
          e(j) = g.c * e(j);
        }
      }
      chased = true;
      break;
    }
    if (chased) continue;
    if (std::abs(d(q)) <= dtol) {
      // Zero last diagonal: rotate column q's superdiagonal up with right rotations.
      d(q) = 0.0;
      double f = e(q - 1);
      e(q - 1) = 0.0;
      for (Eigen::Index j = q - 1; j >= p && f != 0.0; --j) {
        const Givens g = make_givens(d(j), f);
        d(j) = g.r;
        rotate_columns(v, j, q, g.c, g.s);
        if (j > p) {
          f = -g.s * e(j - 1);
          e(j - 1) = g.c * e(j - 1);
        }
        if (j == 0) break;
      }
      continue;
    }

    // Implicit-shift QR sweep on rows/cols p..q with a Wilkinson shift from the trailing 2x2 of B^T B.
    const double dm = d(q - 1);
    const double dq = d(q);
    const double em = e(q - 1);
    const double el = q - 1 > p ? e(q - 2) : 0.0;
    const double t11 = dm * dm + el * el;
    const double t12 = dm * em;
    const double t22 = dq * dq + em * em;
    double mu = t22;
    if (t12 != 0.0) {
      const double delta = 0.5 * (t11 - t22);
      const double sgn = delta >= 0.0 ? 1.0 : -1.0;
      mu = t22 - t12 * t12 / (delta + sgn * std::hypot(delta, t12));
    }
    double y = d(p) * d(p) - mu;
    double z = d(p) * e(p);
    for (Eigen::Index k = p; k < q; ++k) {
      Givens g = make_givens(y, z);
      if (k > p) e(k - 1) = g.r;
      const double dk = g.c * d(k) + g.s * e(k);
      const double ek = -g.s * d(k) + g.c * e(k);
      double bulge = g.s * d(k + 1);
      d(k + 1) = g.c * d(k + 1);
      d(k) = dk;
      e(k) = ek;
      rotate_columns(v, k, k + 1, g.c, g.s);

      g = make_givens(d(k), bulge);
      d(k) = g.r;
      const double ek2 = g.c * e(k) + g.s * d(k + 1);
      d(k + 1) = -g.s * e(k) + g.c * d(k + 1);
      e(k) = ek2;
      rotate_columns(u, k, k + 1, g.c, g.s);
      if (k + 1 < q) {
        bulge = g.s * e(k + 1);
        e(k + 1) = g.c * e(k + 1);
        y = e(k);
        z = bulge;
      }
    }
  }
  if (iter >= max_iter) {
    throw Error(ErrorCode::numeric_failure, "bidiag_svd: no convergence", iter);
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    if (d(i) < 0.0) {
      d(i) = -d(i);
      v.col(i) = -v.col(i);
    }
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index x, Eigen::Index y) { return d(x) > d(y); });
  RealSvd out;
  out.s.resize(n);
  out.u.resize(n, n);
  out.v.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index src = order[static_cast<std::size_t>(k)];
    out.s(k) = d(src);
    out.u.col(k) = u.col(src);
    out.v.col(k) = v.col(src);
  }
  out.iterations = iter;
  return out;
}

kernels::SvdResult bidiag_svd(const Bidiagonal& bd) {
  const RealSvd r = bidiag_svd(bd.a, bd.b);
  return {r.u.cast<Complex>(), r.s, r.v.cast<Complex>()};
}

int default_lanczos_steps(int l, int l5) { return std::min(l5, l + 12); }

ComplexMatrix fast_signal_subspace(const HankelBlockOperator& op, int l, const FastSvdOptions& opts,
                                   Bidiagonal* info) {
  if (l < 1) throw Error(ErrorCode::invalid_input, "fast_signal_subspace: L < 1");
  const int steps = opts.steps > 0 ? std::min(opts.steps, op.l5()) : default_lanczos_steps(l, op.l5());
  if (l > steps) {
    throw Error(ErrorCode::invalid_input, "fast_signal_subspace: L exceeds Lanczos steps");
  }
  const ComplexVector* start = opts.start ? &*opts.start : nullptr;
  Bidiagonal bd = lanczos_bidiag(op, steps, opts.reorth, start);
  if (bd.steps_run < l) {
    throw Error(ErrorCode::numeric_failure,
                "fast_signal_subspace: Krylov space exhausted before L directions", bd.steps_run);
  }
  const RealSvd j = bidiag_svd(bd.a, bd.b);
  ComplexMatrix u_h = bd.u_frame * j.u.leftCols(l).cast<Complex>();
  if (info) *info = std::move(bd);
  return u_h;
}

}  // namespace bsesprit
