// SPDX-License-Identifier: Apache-2.0
#include "bsesprit/channel_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bsesprit/errors.hpp"
#include "bsesprit/kernels.hpp"

namespace bsesprit {

namespace {

constexpr double kDirectionalSpacing = kPi / 8.0;

int sign_of(double x) { return x < 0.0 ? -1 : 1; }

struct LocalAngles {
  double az;
  double el;
};

LocalAngles local_angles(const Vec3& dir, int facing, const char* what) {
  const Vec3 d = dir.normalized();
  const double el = std::acos(std::clamp(d.z(), -1.0, 1.0));
  if (std::abs(std::sin(el)) < 1e-9) {
    throw Error(ErrorCode::degenerate_geometry, std::string(what) + ": elevation at a pole");
  }
  const double az = std::atan2(d.y(), facing * d.x());
  if (std::abs(az) >= kPi / 2.0) {
    throw Error(ErrorCode::degenerate_geometry,
                std::string(what) + ": direction lies behind the array broadside");
  }
  return {az, el};
}

}  // namespace

BeamKind beam_kind_from_string(const std::string& s) {
  if (s == "dft") return BeamKind::dft;
  if (s == "directional") return BeamKind::directional;
  if (s == "custom") return BeamKind::custom;
  throw Error(ErrorCode::config_error, "unknown beam kind '" + s + "'");
}

std::string to_string(BeamKind kind) {
  switch (kind) {
    case BeamKind::dft: return "dft";
    case BeamKind::directional: return "directional";
    case BeamKind::custom: return "custom";
  }
  return "custom";
}

int Scenario::resolved_tx_facing() const {
  return tx_facing != 0 ? tx_facing : sign_of(p_r.x() - p_t.x());
}

int Scenario::resolved_rx_facing() const {
  return rx_facing != 0 ? rx_facing : sign_of(p_t.x() - p_r.x());
}

ComplexVector steering_vector(int m, double omega) {
  ComplexVector a(m);
  for (int k = 0; k < m; ++k) a(k) = std::polar(1.0, k * omega);
  return a;
}

Vec3 direction_vector(double az, double el, int facing) {
  return {facing * std::cos(az) * std::sin(el), std::sin(az) * std::sin(el), std::cos(el)};
}

std::vector<PathParams> params_from_geometry(const Scenario& sc, Rng& rng) {
  const Vec3 d_los = sc.p_r - sc.p_t;
  if (d_los.norm() <= 0.0) {
    throw Error(ErrorCode::degenerate_geometry, "params_from_geometry: p_T == p_R");
  }
  const int ft = sc.resolved_tx_facing();
  const int fr = sc.resolved_rx_facing();
  const double lambda = sc.wavelength();
  std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);

  auto make = [&](const Vec3& dep, const Vec3& arr, double length, double power) {
    PathParams p;
    const LocalAngles a = local_angles(dep, ft, "AOD");
    const LocalAngles b = local_angles(arr, fr, "AOA");
    p.phi_az = a.az;
    p.phi_el = a.el;
    p.theta_az = b.az;
    p.theta_el = b.el;
    p.tau = length / kSpeedOfLight;
    if (p.tau >= 1.0 / sc.delta_f) {
      throw Error(ErrorCode::invalid_input, "params_from_geometry: delay exceeds 1/delta_f");
    }
    const double mag = std::sqrt(power) * lambda / (4.0 * kPi * length);
    p.gamma = std::polar(mag, phase(rng));
    return p;
  };

  std::vector<PathParams> paths;
  paths.push_back(make(d_los, -d_los, d_los.norm(), sc.los_power));
  for (const Vec3& ps : sc.scatterers) {
    const Vec3 a = ps - sc.p_t;
    const Vec3 b = ps - sc.p_r;
    if (a.norm() <= 0.0 || b.norm() <= 0.0) {
      throw Error(ErrorCode::degenerate_geometry,
                  "params_from_geometry: scatterer coincides with an endpoint");
    }
    paths.push_back(make(a, b, a.norm() + b.norm(), sc.nlos_power));
  }
  return paths;
}

std::vector<PathParams> params_from_geometry(const Scenario& sc) {
  Rng rng = make_stream(sc.seed, {0x6761696eULL});
  return params_from_geometry(sc, rng);
}

AngularFreqs to_angular(const PathParams& p, double delta_f) {
  AngularFreqs w;
  w[0] = kPi * std::sin(p.phi_az) * std::sin(p.phi_el);
  w[1] = kPi * std::cos(p.phi_el);
  w[2] = kPi * std::sin(p.theta_az) * std::sin(p.theta_el);
  w[3] = kPi * std::cos(p.theta_el);
  w[4] = wrap_angle(-2.0 * kPi * delta_f * p.tau);
  return w;
}

namespace {

PathParams from_angular_impl(const AngularFreqs& w, double delta_f, bool clamp, bool& clamped) {
  clamped = false;
  constexpr double kEdge = 1.0 - 1e-12;
  auto elevation = [&](double om) {
    double c = om / kPi;
    if (!(std::abs(c) < 1.0)) {
      if (!clamp) throw Error(ErrorCode::out_of_domain, "from_angular: |omega| >= pi in elevation");
      c = std::clamp(c, -kEdge, kEdge);
      clamped = true;
    }
    return std::acos(c);
  };
  auto azimuth = [&](double om, double el) {
    double x = om / (kPi * std::sin(el));
    if (!(std::abs(x) <= 1.0)) {
      if (!clamp) throw Error(ErrorCode::out_of_domain, "from_angular: azimuth term exceeds 1");
      x = std::clamp(x, -1.0, 1.0);
      clamped = true;
    }
    return std::asin(x);
  };
  PathParams p;
  p.phi_el = elevation(w[1]);
  p.phi_az = azimuth(w[0], p.phi_el);
  p.theta_el = elevation(w[3]);
  p.theta_az = azimuth(w[2], p.theta_el);
  double t = std::fmod(-w[4], 2.0 * kPi);
  if (t < 0.0) t += 2.0 * kPi;
  if (t >= 2.0 * kPi) t = 0.0;
  p.tau = t / (2.0 * kPi * delta_f);
  return p;
}

}  // namespace

PathParams from_angular(const AngularFreqs& w, double delta_f) {
  bool clamped = false;
  return from_angular_impl(w, delta_f, false, clamped);
}

PathParams from_angular_clamped(const AngularFreqs& w, double delta_f, bool& clamped) {
  return from_angular_impl(w, delta_f, true, clamped);
}

std::vector<double> beam_grid(BeamKind kind, int m, int n, double focus) {
  std::vector<double> grid(static_cast<std::size_t>(n));
  const double half = 0.5 * (n - 1);
  if (kind == BeamKind::dft) {
    const double step = 2.0 * kPi / m;
    const double k0 = std::round(focus / step - half);
    for (int k = 0; k < n; ++k) grid[static_cast<std::size_t>(k)] = wrap_angle((k0 + k) * step);
  } else if (kind == BeamKind::directional) {
    for (int k = 0; k < n; ++k) {
      grid[static_cast<std::size_t>(k)] = wrap_angle(focus + (k - half) * kDirectionalSpacing);
    }
  } else {
    throw Error(ErrorCode::invalid_input, "beam_grid: custom beams need an explicit grid");
  }
  return grid;
}

namespace {

void fill_shift_data(BeamTransform& bt) {
  const Projector proj = restore_projector(bt.t, bt.f);
  bt.q = proj.q;
  bt.q_generators = proj.generators_kept;
  bt.selectors = restored_selectors(bt.q, bt.f);
}

}  // namespace

BeamTransform make_beam_transform(BeamKind kind, int m, int n, const std::vector<double>& grid) {
  if (static_cast<int>(grid.size()) != n) {
    throw Error(ErrorCode::invalid_input, "make_beam_transform: grid size != N");
  }
  if (n > m) {
    throw Error(ErrorCode::invalid_input, "make_beam_transform: N > M needs a custom transform");
  }
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      if (std::abs(wrap_angle(grid[a] - grid[b])) < 1e-12) {
        throw Error(ErrorCode::singular_transform, "make_beam_transform: duplicate grid points");
      }
    }
  }
  BeamTransform bt;
  bt.kind = kind;
  bt.grid = grid;
  bt.t.resize(m, n);
  bt.f = ComplexMatrix::Zero(n, n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(m));
  for (int k = 0; k < n; ++k) {
    bt.t.col(k) = steering_vector(m, grid[k]) * scale;
    bt.f(k, k) = std::polar(1.0, -grid[k]);
  }
  bt.exact_shift = true;
  fill_shift_data(bt);
  return bt;
}

BeamTransform make_custom_transform(const ComplexMatrix& t) {
  BeamTransform bt;
  bt.kind = BeamKind::custom;
  bt.t = t;
  if (t.rows() < t.cols()) {
    // Hybrid dimension: the pipeline lifts this mode back to element space.
    bt.exact_shift = false;
    return bt;
  }
  const ShiftBasis sb = shift_basis(t);
  bt.f = sb.f;
  bt.exact_shift = sb.exact;
  fill_shift_data(bt);
  return bt;
}

std::array<BeamTransform, 4> make_transforms(const Scenario& sc,
                                             const std::vector<PathParams>& paths) {
  std::array<BeamTransform, 4> out;
  std::array<double, 4> mean{};
  for (const auto& p : paths) {
    const AngularFreqs w = to_angular(p, sc.delta_f);
    for (int d = 0; d < 4; ++d) mean[d] += w[d] / static_cast<double>(paths.size());
  }
  for (int d = 0; d < 4; ++d) {
    const BeamConfig& cfg = d < 2 ? sc.tx_beams : sc.rx_beams;
    const int local = d % 2;
    std::vector<double> grid;
    if (cfg.kind == BeamKind::custom) {
      grid = cfg.custom_grid[static_cast<std::size_t>(local)];
    } else {
      const double focus = cfg.focus ? (*cfg.focus)[static_cast<std::size_t>(local)] : mean[d];
      grid = beam_grid(cfg.kind, sc.m[d], sc.n[d], focus);
    }
    out[d] = make_beam_transform(cfg.kind, sc.m[d], sc.n[d], grid);
  }
  return out;
}

ComplexMatrix steering_matrix(int m, const std::vector<double>& omegas) {
  ComplexMatrix a(m, static_cast<Eigen::Index>(omegas.size()));
  for (std::size_t l = 0; l < omegas.size(); ++l) {
    a.col(static_cast<Eigen::Index>(l)) = steering_vector(m, omegas[l]);
  }
  return a;
}

ComplexMatrix beam_factor(const BeamTransform& transform, const std::vector<double>& omegas) {
  return transform.t.adjoint() * steering_matrix(transform.m(), omegas);
}

ComplexMatrix khatri_rao(const std::vector<ComplexMatrix>& factors) {
  if (factors.empty()) throw Error(ErrorCode::invalid_input, "khatri_rao: no factors");
  ComplexMatrix acc = factors.front();
  for (std::size_t k = 1; k < factors.size(); ++k) {
    const ComplexMatrix& f = factors[k];
    if (f.cols() != acc.cols()) {
      throw Error(ErrorCode::shape_mismatch, "khatri_rao: column counts differ");
    }
    ComplexMatrix next(acc.rows() * f.rows(), acc.cols());
    for (Eigen::Index i = 0; i < acc.rows(); ++i) {
      next.middleRows(i * f.rows(), f.rows()) =
          f.array().rowwise() * acc.row(i).array();
    }
    acc = std::move(next);
  }
  return acc;
}

ComplexMatrix beamspace_manifold(const std::vector<AngularFreqs>& freqs,
                                 const std::array<BeamTransform, 4>& transforms, int m5) {
  std::vector<ComplexMatrix> factors;
  for (int d = 0; d < 4; ++d) {
    std::vector<double> om;
    for (const auto& w : freqs) om.push_back(w[d]);
    factors.push_back(beam_factor(transforms[d], om));
  }
  std::vector<double> om5;
  for (const auto& w : freqs) om5.push_back(w[4]);
  factors.push_back(steering_matrix(m5, om5));
  return khatri_rao(factors);
}

BeamspaceTensor synth_beamspace_tensor(const std::vector<PathParams>& paths,
                                       const std::array<BeamTransform, 4>& transforms,
                                       const Scenario& sc) {
  if (paths.empty()) throw Error(ErrorCode::invalid_input, "synth_beamspace_tensor: no paths");
  std::vector<AngularFreqs> freqs;
  ComplexVector gamma(static_cast<Eigen::Index>(paths.size()));
  for (std::size_t l = 0; l < paths.size(); ++l) {
    freqs.push_back(to_angular(paths[l], sc.delta_f));
    gamma(static_cast<Eigen::Index>(l)) = paths[l].gamma;
  }
  BeamspaceTensor out;
  out.dims = {transforms[0].n(), transforms[1].n(), transforms[2].n(), transforms[3].n(), sc.m[4]};
  out.values = beamspace_manifold(freqs, transforms, sc.m[4]) * gamma;
  return out;
}

BeamspaceTensor observe_and_estimate(const BeamspaceTensor& tensor, const ObservationConfig& obs,
                                     Rng& rng) {
  const int nt = tensor.dims[0] * tensor.dims[1];
  const int nr = tensor.dims[2] * tensor.dims[3];
  const int m5 = tensor.dims[4];
  if (obs.n_p < nt) {
    throw Error(ErrorCode::underdetermined_pilot, "observe_and_estimate: N_P < N1*N2");
  }
  BeamspaceTensor out = tensor;
  if (obs.n0 <= 0.0) return out;

  if (obs.mode == NoiseMode::direct) {
    ComplexVector noise(tensor.size());
    fill_complex_normal(rng, noise, obs.n0 / (obs.n_p * obs.e_s));
    out.values += noise;
    return out;
  }

  // Scaled DFT pilots, S S^H = N_P E_s I.
  ComplexMatrix s(nt, obs.n_p);
  const double amp = std::sqrt(obs.e_s);
  for (int i = 0; i < nt; ++i) {
    for (int p = 0; p < obs.n_p; ++p) {
      s(i, p) = std::polar(amp, -2.0 * kPi * i * p / obs.n_p);
    }
  }
  const ComplexMatrix s_h = s.adjoint() / (obs.n_p * obs.e_s);
  ComplexMatrix h(nr, nt);
  ComplexVector z(static_cast<Eigen::Index>(nr) * obs.n_p);
  for (int k = 0; k < m5; ++k) {
    for (int t = 0; t < nt; ++t) {
      for (int r = 0; r < nr; ++r) {
        h(r, t) = tensor.values((static_cast<Eigen::Index>(t) * nr + r) * m5 + k);
      }
    }
    fill_complex_normal(rng, z, obs.n0);
    const ComplexMatrix y = h * s + Eigen::Map<const ComplexMatrix>(z.data(), nr, obs.n_p);
    const ComplexMatrix est = y * s_h;
    for (int t = 0; t < nt; ++t) {
      for (int r = 0; r < nr; ++r) {
        out.values((static_cast<Eigen::Index>(t) * nr + r) * m5 + k) = est(r, t);
      }
    }
  }
  return out;
}

BeamspaceTensor observe_and_estimate(const BeamspaceTensor& tensor, const Scenario& sc, Rng& rng) {
  return observe_and_estimate(tensor, ObservationConfig{sc.n_p, sc.e_s, sc.n0, sc.noise_mode}, rng);
}

namespace {

double signal_power(const std::vector<PathParams>& paths,
                    const std::array<BeamTransform, 4>& tr, const Scenario& sc,
                    std::vector<double>* per_path) {
  const auto L = static_cast<Eigen::Index>(paths.size());
  std::vector<double> w1, w2, w3, w4;
  ComplexVector gamma(L);
  RealVector w5(L);
  for (Eigen::Index l = 0; l < L; ++l) {
    const AngularFreqs w = to_angular(paths[static_cast<std::size_t>(l)], sc.delta_f);
    w1.push_back(w[0]);
    w2.push_back(w[1]);
    w3.push_back(w[2]);
    w4.push_back(w[3]);
    w5(l) = w[4];
    gamma(l) = paths[static_cast<std::size_t>(l)].gamma;
  }
  const ComplexMatrix b1 = beam_factor(tr[0], w1);
  const ComplexMatrix b2 = beam_factor(tr[1], w2);
  const ComplexMatrix a3 = steering_matrix(sc.m[2], w3);
  const ComplexMatrix a4 = steering_matrix(sc.m[3], w4);
  const ComplexMatrix g_t = ((b1.adjoint() * b1).array() * (b2.adjoint() * b2).array()).matrix();
  const ComplexMatrix g_r = ((a3.adjoint() * a3).array() * (a4.adjoint() * a4).array()).matrix();
  const ComplexMatrix g = (g_t.array() * g_r.array()).matrix();
  double total = 0.0;
  ComplexVector d(L);
  for (int k = 0; k < sc.m[4]; ++k) {
    for (Eigen::Index l = 0; l < L; ++l) d(l) = gamma(l) * std::polar(1.0, k * w5(l));
    total += std::real(d.dot(g * d));
  }
  if (per_path) {
    per_path->clear();
    for (Eigen::Index l = 0; l < L; ++l) {
      per_path->push_back(sc.e_s * sc.m[4] * std::norm(gamma(l)) * std::real(g(l, l)));
    }
  }
  return total * sc.e_s;
}

}  // namespace

LinkMetrics link_metrics(const std::vector<PathParams>& paths,
                         const std::array<BeamTransform, 4>& transforms, const Scenario& sc) {
  LinkMetrics lm;
  lm.signal_power = signal_power(paths, transforms, sc, &lm.path_power);
  lm.noise_power = static_cast<double>(sc.m[2]) * sc.m[3] * sc.m[4] * sc.n0;
  lm.snr_linear = lm.noise_power > 0.0 ? lm.signal_power / lm.noise_power
                                       : std::numeric_limits<double>::infinity();
  lm.snr_db = 10.0 * std::log10(lm.snr_linear);
  return lm;
}

double noise_for_snr(const std::vector<PathParams>& paths,
                     const std::array<BeamTransform, 4>& transforms, const Scenario& sc,
                     double snr_db) {
  const double s = signal_power(paths, transforms, sc, nullptr);
  return s / (static_cast<double>(sc.m[2]) * sc.m[3] * sc.m[4] * std::pow(10.0, snr_db / 10.0));
}

}  // namespace bsesprit
