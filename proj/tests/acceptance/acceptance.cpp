// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--only 1,3,...] [--known-fail 3,4] [--full] [--trials N] [--threads N]
//
// Exit status is nonzero when a criterion fails that is not listed as known, or when a
// listed criterion passes (the ledger would then be stale).
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bsesprit/errors.hpp"
#include "bsesprit/fast_svd.hpp"
#include "bsesprit/harness.hpp"
#include "bsesprit/md_esprit.hpp"
#include "bsesprit/perturbation.hpp"
#include "bsesprit/slac.hpp"
#include "bsesprit/tensor_esprit.hpp"
#include "oracles.hpp"

using namespace bsesprit;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Options {
  std::set<int> only;
  std::set<int> known_fail;
  bool full = false;
  int trials = 200;
  int threads = 1;
};

std::set<int> parse_list(const std::string& s) {
  std::set<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.insert(std::stoi(item));
  }
  return out;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Scenario desk(BeamKind kind = BeamKind::dft) {
  Scenario sc;
  sc.m[4] = 64;
  sc.delta_f = 937.5e3;
  sc.tx_beams.kind = kind;
  sc.rx_beams.kind = kind;
  return sc;
}

struct Setup {
  Scenario sc;
  std::vector<PathParams> paths;
  std::array<BeamTransform, 4> tr;
  BeamspaceTensor h;
};

Setup make_setup(const Scenario& sc) {
  Setup s;
  s.sc = sc;
  s.paths = params_from_geometry(sc);
  s.tr = make_transforms(sc, s.paths);
  s.h = synth_beamspace_tensor(s.paths, s.tr, sc);
  return s;
}

std::vector<AngularFreqs> freqs_of(const std::vector<PathParams>& p, double df) {
  std::vector<AngularFreqs> out;
  for (const auto& x : p) out.push_back(to_angular(x, df));
  return out;
}

const MetricRow* find_row(const std::vector<MetricRow>& rows, const std::string& method,
                          double snr, const std::string& cls, const std::string& metric) {
  for (const auto& r : rows) {
    if (r.method == method && r.snr_db == snr && r.path_class == cls && r.metric == metric) return &r;
  }
  return nullptr;
}

// Desk-scale Monte-Carlo run shared by criteria 3, 7 and 8.
struct DeskRun {
  bool done = false;
  ExperimentResult res;
  double seconds = 0.0;
};

DeskRun& desk_run(const Options& o) {
  static DeskRun run;
  if (!run.done) {
    ExperimentConfig cfg;
    cfg.scenario = desk();
    cfg.snr_grid_db = {0, 10, 20, 30, 40};
    cfg.trials = o.trials;
    cfg.methods = {Method::matrix_fast, Method::analytic};
    cfg.seed = 2024;
    const auto t0 = Clock::now();
    run.res = run_experiment(cfg, RunOptions{o.threads, false});
    run.seconds = seconds_since(t0);
    run.done = true;
  }
  return run;
}

// 1. Noiseless exactness.
Outcome check_noiseless(const Options&) {
  const Setup s = make_setup(desk());
  const auto truth = freqs_of(s.paths, s.sc.delta_f);
  double worst_w = 0.0, worst_g = 0.0, worst_t = 0.0;
  for (SubspaceMethod m : {SubspaceMethod::dense, SubspaceMethod::fast}) {
    EspritOptions opts;
    opts.method = m;
    opts.delta_f = s.sc.delta_f;
    const auto t0 = Clock::now();
    const EspritEstimate est = esprit_pipeline(s.h, s.tr, 2, 0, opts);
    worst_t = std::max(worst_t, seconds_since(t0));
    const auto perm = match_paths(est.freqs, truth);
    for (std::size_t l = 0; l < truth.size(); ++l) {
      for (std::size_t n = 0; n < 5; ++n) {
        worst_w = std::max(worst_w, std::abs(wrap_angle(est.freqs[perm[l]][n] - truth[l][n])));
      }
      worst_g = std::max(worst_g, std::abs(est.gains(perm[l]) - s.paths[l].gamma) /
                                      std::abs(s.paths[l].gamma));
    }
  }
  return {worst_w < 1e-8 && worst_g < 1e-8 && worst_t < 5.0,
          "max |dw| " + fmt("%.2e", worst_w) + " rad, max gain rel " + fmt("%.2e", worst_g) +
              ", slowest trial " + fmt("%.3f", worst_t) + " s"};
}

// 2. Perturbation formulas.
Outcome check_perturbation(const Options&) {
  const Setup s = make_setup(desk());
  PerturbationKit kit = build_xi_upsilon(s.paths, s.tr, s.sc.m[4], 0, s.sc.delta_f);
  build_kappa(kit, s.tr);
  Rng rng = make_stream(202);
  double worst_eq = 0.0;
  BeamspaceTensor dh = s.h;
  for (int draw = 0; draw < 100; ++draw) {
    fill_complex_normal(rng, dh.values, 1.0);
    const ComplexMatrix big = spatial_smooth(dh, kit.l5).values;
    for (std::size_t l = 0; l < kit.paths.size(); ++l) {
      for (std::size_t n = 0; n < 5; ++n) {
        const ComplexVector chi_c = kit.chi[l].conjugate();
        const Complex a = (kit.lambda[l][n].adjoint() * big * chi_c)(0, 0);
        const Complex b = kit.xi[l][n].dot(dh.values);
        const double scale = kit.lambda[l][n].norm() * big.norm() * chi_c.norm();
        worst_eq = std::max(worst_eq, std::abs(a - b) / scale);
      }
    }
  }

  double worst_fd = 0.0;
  const ComplexVector& h = s.h.values;
  for (int dir = 0; dir < 3; ++dir) {
    ComplexVector d(h.size());
    fill_complex_normal(rng, d, 1.0);
    d *= h.norm() / d.norm();
    std::map<double, std::vector<PathParams>> cache;
    auto run = [&](double eps) -> const std::vector<PathParams>& {
      auto it = cache.find(eps);
      if (it == cache.end()) {
        BeamspaceTensor t = s.h;
        t.values = h + eps * d;
        EspritOptions o;
        o.method = SubspaceMethod::fast;
        o.delta_f = s.sc.delta_f;
        const EspritEstimate est = esprit_pipeline(t, s.tr, 2, 0, o);
        const auto perm = match_paths(est.freqs, kit.freqs);
        std::vector<PathParams> ordered;
        for (int p : perm) ordered.push_back(est.params[p]);
        it = cache.emplace(eps, ordered).first;
      }
      return it->second;
    };
    for (int l = 0; l < 2; ++l) {
      const auto pred = predicted_param_shift(kit, l, d);
      for (int which = 0; which < 5; ++which) {
        auto get = [&](double e) {
          const PathParams& p = run(e)[l];
          const double v[5] = {p.phi_az, p.phi_el, p.theta_az, p.theta_el, p.tau};
          return v[which];
        };
        const double slope = oracle::richardson_derivative(get, 1e-6);
        worst_fd = std::max(worst_fd, std::abs(slope - pred[which]) / std::abs(pred[which]));
      }
    }
  }
  return {worst_eq < 1e-10 && worst_fd < 0.01,
          "matrix/vector rel diff " + fmt("%.2e", worst_eq) + ", worst finite-difference slope rel error " +
              fmt("%.2e", worst_fd)};
}

// 3. Analytical vs simulated RMSE at desk scale.
Outcome check_analytic_match(const Options& o) {
  DeskRun& run = desk_run(o);
  const char* metrics[] = {"rmse_phi_az", "rmse_phi_el", "rmse_theta_az",
                           "rmse_theta_el", "rmse_tau_m", "rmse_gamma"};
  double worst = 1.0, lo = 1e9, hi = 0.0;
  std::string where;
  bool ok = true;
  std::string per_snr;
  for (double snr : {20.0, 30.0, 40.0}) {
    double snr_hi = 0.0;
    for (const char* cls : {"los", "nlos"}) {
      for (const char* m : metrics) {
        const MetricRow* sim = find_row(run.res.rows, "matrix_fast", snr, cls, m);
        const MetricRow* ana = find_row(run.res.rows, "analytic", snr, cls, m);
        if (!sim || !ana) return {false, std::string("missing row ") + m};
        const double r = sim->value / ana->value;
        snr_hi = std::max(snr_hi, r);
        lo = std::min(lo, r);
        hi = std::max(hi, r);
        if (r < 0.8 || r > 1.25) ok = false;
        if (std::abs(std::log(r)) > std::abs(std::log(worst))) {
          worst = r;
          where = std::string(cls) + " " + m + " @" + fmt("%g", snr) + " dB";
        }
      }
    }
    per_snr += (per_snr.empty() ? "" : ", ") + fmt("%g dB", snr) + " max " + fmt("%.3f", snr_hi);
  }
  ok = ok && run.seconds < 15 * 60;
  return {ok, "ratios in [" + fmt("%.3f", lo) + ", " + fmt("%.3f", hi) + "], worst " +
                  fmt("%.3f", worst) + " (" + where + "; " + per_snr + "), run " + fmt("%.0f", run.seconds) + " s"};
}

// 4. Paper point at full scale.
Outcome check_paper_point(const Options& o) {
  Scenario sc;  // M5 = 500, 120 kHz spacing, DFT beams
  const auto paths = params_from_geometry(sc);
  const auto tr = make_transforms(sc, paths);
  const double n0 = noise_for_snr(paths, tr, sc, 40.0);
  PerturbationKit kit = build_xi_upsilon(paths, tr, sc.m[4], 0, sc.delta_f);
  build_kappa(kit, tr);
  const ParamRmse r = analytic_param_rmse(kit, n0, sc.n_p, sc.e_s)[0];
  const double ana = std::sqrt((r.phi_az * r.phi_az + r.phi_el * r.phi_el + r.theta_az * r.theta_az +
                                r.theta_el * r.theta_el) / 4.0);
  const double paper_ana = 2.4485e-5, paper_sim = 2.474e-5;
  bool ok = std::abs(ana - paper_ana) <= 1e-4 * paper_ana;
  std::string detail = "analytic LOS angle RMSE " + fmt("%.4e", ana) + " rad (target 2.4485e-05)";
  if (o.full) {
    ExperimentConfig cfg;
    cfg.scenario = sc;
    cfg.snr_grid_db = {40.0};
    cfg.trials = std::max(500, o.trials);
    cfg.methods = {Method::matrix_fast};
    cfg.localization = false;
    cfg.rate = false;
    const ExperimentResult res = run_experiment(cfg, RunOptions{o.threads, false});
    double acc = 0.0;
    for (const char* m : {"rmse_phi_az", "rmse_phi_el", "rmse_theta_az", "rmse_theta_el"}) {
      const double v = find_row(res.rows, "matrix_fast", 40.0, "los", m)->value;
      acc += v * v;
    }
    const double sim = std::sqrt(acc / 4.0);
    ok = ok && std::abs(sim - paper_sim) <= 0.15 * paper_sim;
    detail += ", simulated " + fmt("%.4e", sim) + " rad over " + std::to_string(cfg.trials) +
              " trials (target 2.474e-05)";
  } else {
    detail += ", simulation skipped (--full)";
  }
  return {ok, detail};
}

// 5. Fast SVD equivalence and cost.
Outcome check_fast_svd(const Options&) {
  const Setup s = make_setup(desk());
  const int l5 = default_l5(s.sc.m[4]);
  const ComplexMatrix ud = signal_subspace(s.h, l5, 2, SubspaceMethod::dense);
  const ComplexMatrix uf = signal_subspace(s.h, l5, 2, SubspaceMethod::fast);
  const double sine = oracle::max_principal_sine(ud, uf);

  const HankelBlockOperator op(s.h, l5);
  const ComplexMatrix dense = oracle::dense_hankel(s.h.values, s.h.blocks(), s.sc.m[4], l5);
  Rng rng = make_stream(205);
  const ComplexMatrix x = oracle::random_matrix(rng, l5, 1);
  const ComplexVector y_dense = dense * x.col(0);
  const double matvec = (op.apply(x.col(0)) - y_dense).norm() / y_dense.norm();

  // Fast-subspace time at L and 2L, median of repeats.
  auto subspace_time = [&](int l) {
    const Setup t = make_setup(scenario_with_paths(desk(), l));
    const double n0 = noise_for_snr(t.paths, t.tr, t.sc, 40.0);
    Scenario sc = t.sc;
    sc.n0 = n0;
    Rng r = make_stream(206, {static_cast<std::uint64_t>(l)});
    const BeamspaceTensor noisy = observe_and_estimate(t.h, sc, r);
    const HankelBlockOperator hop(noisy, l5);
    std::vector<double> times;
    for (int k = 0; k < 15; ++k) {
      const auto t0 = Clock::now();
      (void)fast_signal_subspace(hop, l);
      times.push_back(seconds_since(t0));
    }
    std::sort(times.begin(), times.end());
    return times[times.size() / 2];
  };
  const double t3 = subspace_time(3), t6 = subspace_time(6);
  const double growth = t6 / t3;

  const auto sweep = runtime_sweep(desk(), {6}, 3);
  const double speedup = sweep[0].tensor_s / sweep[0].proposed_s;
  return {sine < 1e-8 && matvec < 1e-10 && growth <= 1.5 && speedup >= 5.0,
          "principal sine " + fmt("%.2e", sine) + ", matvec rel " + fmt("%.2e", matvec) +
              ", time L=6/L=3 " + fmt("%.2f", growth) + "x, tensor/proposed at L=6 " +
              fmt("%.1f", speedup) + "x"};
}

// 6. Auto-pairing with a shared frequency.
Outcome check_pairing(const Options&) {
  const Scenario sc = desk();
  const double df = sc.delta_f;
  AngularFreqs a{{0.35, 0.9, -0.2, 1.1, -0.4}}, b{{0.35, 1.3, 0.25, 0.8, -1.7}};
  std::vector<PathParams> paths = {from_angular(a, df), from_angular(b, df)};
  paths[0].gamma = {1.0, 0.2};
  paths[1].gamma = {-0.3, 0.5};
  const auto tr = make_transforms(sc, paths);
  const BeamspaceTensor h = synth_beamspace_tensor(paths, tr, sc);
  const std::vector<AngularFreqs> truth = {a, b};
  int ok = 0, errors = 0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    EspritOptions opts;
    opts.delta_f = df;
    opts.pairing_seed = 0x5eed0000ULL + static_cast<std::uint64_t>(t);
    try {
      const EspritEstimate est = esprit_pipeline(h, tr, 2, 0, opts);
      const auto perm = match_paths(est.freqs, truth);
      double worst = 0.0;
      for (int l = 0; l < 2; ++l)
        for (std::size_t n = 0; n < 5; ++n)
          worst = std::max(worst, std::abs(wrap_angle(est.freqs[perm[l]][n] - truth[l][n])));
      if (worst < 1e-6) ++ok;
    } catch (const Error&) {
      ++errors;
    }
  }
  return {ok >= 0.99 * trials, std::to_string(ok) + "/" + std::to_string(trials) +
                                   " correctly paired (" + std::to_string(errors) + " errors)"};
}

// 7. Localization.
Outcome check_localization(const Options& o) {
  double worst = 0.0;
  for (int count : {1, 2, 4}) {
    Scenario sc = desk();
    Rng rng = make_stream(207, {static_cast<std::uint64_t>(count)});
    std::uniform_real_distribution<double> ux(3.0, 17.0), uy(0.5, 9.5), uz(0.0, 4.0);
    sc.scatterers.clear();
    for (int i = 0; i < count; ++i) sc.scatterers.push_back({ux(rng), uy(rng), uz(rng)});
    const auto paths = params_from_geometry(sc);
    const auto res = localize(paths, sc.p_t, localization_weights(paths, WeightRule::uniform),
                              frames_of(sc));
    worst = std::max(worst, (res.p_hat - sc.p_r).norm());
  }
  DeskRun& run = desk_run(o);
  std::vector<double> ratios;
  for (double snr : {0.0, 10.0, 20.0, 30.0, 40.0}) {
    const MetricRow* sim = find_row(run.res.rows, "matrix_fast", snr, "all", "rmse_pos_m");
    const MetricRow* ana = find_row(run.res.rows, "analytic", snr, "all", "rmse_pos_m");
    if (!sim || !ana) return {false, "missing position rows"};
    ratios.push_back(sim->value / ana->value);
  }
  bool monotone = true;
  std::string list;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    if (i > 0 && !(ratios[i] < ratios[i - 1])) monotone = false;
    list += (i ? ", " : "") + fmt("%.3f", ratios[i]);
  }
  return {worst < 1e-9 && monotone,
          "exact-input error " + fmt("%.1e", worst) + " m, sim/analytic over 0..40 dB: " + list};
}

// 8. Achievable rate.
Outcome check_rate(const Options& o) {
  Scenario sc;
  const auto paths = params_from_geometry(sc);
  const auto tr = make_transforms(sc, paths);
  const double n0 = noise_for_snr(paths, tr, sc, 40.0);
  const double perfect = perfect_csi_rate(paths, sc.m, sc.delta_f, n0, sc.e_s, sc.n_c, sc.n_p);
  DeskRun& run = desk_run(o);
  double gap = 0.0;
  for (double snr : {10.0, 20.0, 30.0, 40.0}) {
    const MetricRow* p = find_row(run.res.rows, "perfect_csi", snr, "all", "rate_bps_hz");
    const MetricRow* e = find_row(run.res.rows, "matrix_fast", snr, "all", "rate_bps_hz");
    if (!p || !e) return {false, "missing rate rows"};
    gap = std::max(gap, p->value - e->value);
  }
  return {std::abs(perfect - 17.93) <= 0.05 && gap < 0.1,
          "paper-scale perfect-CSI rate " + fmt("%.3f", perfect) +
              " bit/s/Hz (target 17.93), desk estimated-CSI gap " + fmt("%.4f", gap)};
}

// 9. Determinism across thread counts.
Outcome check_determinism(const Options&) {
  ExperimentConfig cfg;
  cfg.scenario = desk();
  cfg.snr_grid_db = {10.0, 30.0};
  cfg.trials = 8;
  cfg.methods = {Method::matrix_dense, Method::matrix_fast, Method::analytic};
  cfg.seed = 909;
  const auto dir = std::filesystem::temp_directory_path() / "bsesprit_acceptance";
  std::filesystem::remove_all(dir);
  std::vector<std::string> files;
  for (int threads : {1, 4}) {
    const ExperimentResult res = run_experiment(cfg, RunOptions{threads, false});
    const auto out = dir / std::to_string(threads);
    write_outputs(res, out.string());
    std::ifstream in(out / "metrics.csv", std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    files.push_back(ss.str());
  }
  std::filesystem::remove_all(dir);
  const bool same = files[0] == files[1] && !files[0].empty();
  return {same, same ? "metrics.csv identical for 1 and 4 threads (" +
                           std::to_string(files[0].size()) + " bytes)"
                     : "metrics.csv differs between 1 and 4 threads"};
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    auto value = [&]() -> std::string {
      if (i + 1 >= argc) {
        std::fprintf(stderr, "missing value for %s\n", a.c_str());
        std::exit(2);
      }
      return argv[++i];
    };
    if (a == "--only") {
      o.only = parse_list(value());
    } else if (a == "--known-fail") {
      o.known_fail = parse_list(value());
    } else if (a == "--full") {
      o.full = true;
    } else if (a == "--trials") {
      o.trials = std::stoi(value());
    } else if (a == "--threads") {
      o.threads = std::stoi(value());
    } else {
      std::fprintf(stderr, "usage: acceptance [--only LIST] [--known-fail LIST] [--full] "
                           "[--trials N] [--threads N]\n");
      return 2;
    }
  }

  const std::vector<std::pair<std::string, std::function<Outcome(const Options&)>>> criteria = {
      {"noiseless exactness", check_noiseless},
      {"perturbation formulas", check_perturbation},
      {"analytic vs simulated RMSE", check_analytic_match},
      {"paper point (M5 = 500)", check_paper_point},
      {"fast SVD equivalence and cost", check_fast_svd},
      {"auto-pairing stress", check_pairing},
      {"localization", check_localization},
      {"achievable rate", check_rate},
      {"determinism", check_determinism},
  };

  int unexpected = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!o.only.empty() && !o.only.count(id)) continue;
    Outcome r;
    const auto t0 = Clock::now();
    try {
      r = criteria[k].second(o);
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    const bool known = o.known_fail.count(id) > 0;
    std::string note;
    if (!r.pass && known) note = " [known]";
    if (r.pass && known) note = " [unexpected pass]";
    if (r.pass == known) ++unexpected;
    std::printf("%s %d %s: %s (%.1f s)%s\n", r.pass ? "PASS" : "FAIL", id,
                criteria[k].first.c_str(), r.detail.c_str(), seconds_since(t0), note.c_str());
    std::fflush(stdout);
  }
  return unexpected == 0 ? 0 : 1;
}
