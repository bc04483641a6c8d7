// SPDX-License-Identifier: Apache-2.0
#include "bsesprit/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "bsesprit/errors.hpp"
#include "bsesprit/perturbation.hpp"
#include "scenario_json.hpp"

namespace bsesprit {

using nlohmann::json;

std::string to_string(Method m) {
  switch (m) {
    case Method::matrix_dense: return "matrix_dense";
    case Method::matrix_fast: return "matrix_fast";
    case Method::tensor: return "tensor";
    case Method::analytic: return "analytic";
  }
  return "unknown";
}

Method method_from_string(const std::string& s) {
  if (s == "matrix_dense") return Method::matrix_dense;
  if (s == "matrix_fast") return Method::matrix_fast;
  if (s == "tensor") return Method::tensor;
  if (s == "analytic") return Method::analytic;
  throw Error(ErrorCode::config_error, "unknown method '" + s + "'");
}

// ---------------------------------------------------------------------------
// Config

namespace {

[[noreturn]] void config_fail(const std::string& msg) { throw Error(ErrorCode::config_error, msg); }

template <typename T>
T get_as(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    config_fail(std::string("bad value for '") + key + "': " + e.what());
  }
}

void validate_experiment(const ExperimentConfig& cfg) {
  detail::validate_scenario(cfg.scenario);
  if (cfg.trials < 1) config_fail("trials must be >= 1");
  if (cfg.snr_grid_db.empty()) config_fail("snr_db must not be empty");
  for (double s : cfg.snr_grid_db) {
    if (!std::isfinite(s)) config_fail("snr_db entries must be finite");
  }
  if (cfg.methods.empty()) config_fail("methods must not be empty");
  std::set<Method> seen(cfg.methods.begin(), cfg.methods.end());
  if (seen.size() != cfg.methods.size()) config_fail("methods contains duplicates");
  const int l = cfg.scenario.path_count();
  const int m5 = cfg.scenario.m[4];
  const int l5 = cfg.l5 > 0 ? cfg.l5 : default_l5(m5);
  if (cfg.l5 < 0) config_fail("l5 must be positive or \"auto\"");
  if (l5 > m5) config_fail("l5 exceeds the number of subcarriers");
  if (l5 < l || m5 + 1 - l5 < l + 1) {
    config_fail("l5 = " + std::to_string(l5) + " leaves too few rows or columns for " +
                std::to_string(l) + " paths");
  }
  if (!(cfg.failure_limit >= 0.0 && cfg.failure_limit <= 1.0)) {
    config_fail("failure_limit must lie in [0, 1]");
  }
  if (cfg.lanczos_steps && *cfg.lanczos_steps < l) config_fail("lanczos_steps must be >= path count");
  if (cfg.cp.max_iter < 1 || cfg.cp.restarts < 1 || !(cfg.cp.tol > 0.0)) {
    config_fail("cp options must be positive");
  }
}

ExperimentConfig experiment_from_value(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) config_fail("experiment config must be a JSON object");
  static const std::set<std::string> known{
      "scenario", "scenario_file", "snr_db", "trials", "methods", "l5", "outputs", "seed",
      "weights", "common_noise", "localization", "rate", "failure_limit", "lanczos_steps", "cp"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) config_fail("unknown key '" + key + "'");
  }
  ExperimentConfig cfg;
  if (j.contains("scenario") && j.contains("scenario_file")) {
    config_fail("give either 'scenario' or 'scenario_file', not both");
  }
  if (j.contains("scenario")) {
    cfg.scenario = detail::scenario_from_json_value(j.at("scenario"));
  } else if (j.contains("scenario_file")) {
    std::filesystem::path p = get_as<std::string>(j, "scenario_file");
    if (p.is_relative()) p = base_dir / p;
    cfg.scenario = load_scenario(p.string());
  }
  if (j.contains("snr_db")) {
    const json& s = j.at("snr_db");
    if (s.is_number()) {
      cfg.snr_grid_db = {s.get<double>()};
    } else {
      cfg.snr_grid_db = get_as<std::vector<double>>(j, "snr_db");
    }
  } else {
    config_fail("missing 'snr_db'");
  }
  if (j.contains("trials")) cfg.trials = get_as<int>(j, "trials");
  if (j.contains("methods")) {
    cfg.methods.clear();
    for (const auto& s : get_as<std::vector<std::string>>(j, "methods")) {
      cfg.methods.push_back(method_from_string(s));
    }
  }
  if (j.contains("l5")) {
    const json& v = j.at("l5");
    if (v.is_string()) {
      if (v.get<std::string>() != "auto") config_fail("l5 must be an integer or \"auto\"");
      cfg.l5 = 0;
    } else {
      cfg.l5 = get_as<int>(j, "l5");
      if (cfg.l5 <= 0) config_fail("l5 must be positive or \"auto\"");
    }
  }
  if (j.contains("outputs")) cfg.outputs = get_as<std::string>(j, "outputs");
  if (j.contains("seed")) cfg.seed = get_as<std::uint64_t>(j, "seed");
  if (j.contains("weights")) {
    const auto w = get_as<std::string>(j, "weights");
    if (w == "uniform") {
      cfg.weights = WeightRule::uniform;
    } else if (w == "snr") {
      cfg.weights = WeightRule::snr;
    } else {
      config_fail("weights must be \"uniform\" or \"snr\"");
    }
  }
  if (j.contains("common_noise")) cfg.common_noise = get_as<bool>(j, "common_noise");
  if (j.contains("localization")) cfg.localization = get_as<bool>(j, "localization");
  if (j.contains("rate")) cfg.rate = get_as<bool>(j, "rate");
  if (j.contains("failure_limit")) cfg.failure_limit = get_as<double>(j, "failure_limit");
  if (j.contains("lanczos_steps")) cfg.lanczos_steps = get_as<int>(j, "lanczos_steps");
  if (j.contains("cp")) {
    const json& c = j.at("cp");
    if (!c.is_object()) config_fail("'cp' must be an object");
    for (const auto& [key, _] : c.items()) {
      if (key != "max_iter" && key != "tol" && key != "restarts" && key != "line_search" &&
          key != "seed") {
        config_fail("unknown key 'cp." + key + "'");
      }
    }
    if (c.contains("max_iter")) cfg.cp.max_iter = get_as<int>(c, "max_iter");
    if (c.contains("tol")) cfg.cp.tol = get_as<double>(c, "tol");
    if (c.contains("restarts")) cfg.cp.restarts = get_as<int>(c, "restarts");
    if (c.contains("line_search")) cfg.cp.line_search = get_as<bool>(c, "line_search");
    if (c.contains("seed")) cfg.cp.seed = get_as<std::uint64_t>(c, "seed");
  }
  validate_experiment(cfg);
  return cfg;
}

}  // namespace

ExperimentConfig experiment_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    config_fail(std::string("invalid JSON: ") + e.what());
  }
  return experiment_from_value(j, std::filesystem::current_path());
}

ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) config_fail("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    config_fail(std::string("invalid JSON in '") + path + "': " + e.what());
  }
  return experiment_from_value(j, std::filesystem::path(path).parent_path());
}

std::string experiment_to_json(const ExperimentConfig& cfg) {
  json j;
  j["scenario"] = detail::scenario_to_json_value(cfg.scenario);
  j["snr_db"] = cfg.snr_grid_db;
  j["trials"] = cfg.trials;
  std::vector<std::string> methods;
  for (Method m : cfg.methods) methods.push_back(to_string(m));
  j["methods"] = methods;
  if (cfg.l5 > 0) {
    j["l5"] = cfg.l5;
  } else {
    j["l5"] = "auto";
  }
  j["outputs"] = cfg.outputs;
  j["seed"] = cfg.seed;
  j["weights"] = cfg.weights == WeightRule::snr ? "snr" : "uniform";
  j["common_noise"] = cfg.common_noise;
  j["localization"] = cfg.localization;
  j["rate"] = cfg.rate;
  j["failure_limit"] = cfg.failure_limit;
  if (cfg.lanczos_steps) j["lanczos_steps"] = *cfg.lanczos_steps;
  j["cp"] = {{"max_iter", cfg.cp.max_iter},
             {"tol", cfg.cp.tol},
             {"restarts", cfg.cp.restarts},
             {"line_search", cfg.cp.line_search},
             {"seed", cfg.cp.seed}};
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Truth matching

namespace {

double match_cost(const AngularFreqs& a, const AngularFreqs& b) {
  double c = 0.0;
  for (std::size_t n = 0; n < 5; ++n) {
    const double d = wrap_angle(a[n] - b[n]);
    c += d * d;
  }
  return c;
}

// Minimum-cost assignment for a square cost matrix; returns row -> column.
std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j) {
    if (p[j] > 0) row_to_col[p[j] - 1] = j - 1;
  }
  return row_to_col;
}

}  // namespace

std::vector<int> match_paths(const std::vector<AngularFreqs>& estimated,
                             const std::vector<AngularFreqs>& truth) {
  if (estimated.size() != truth.size()) {
    throw Error(ErrorCode::shape_mismatch, "match_paths: list lengths differ");
  }
  const int l = static_cast<int>(truth.size());
  std::vector<std::vector<double>> cost(l, std::vector<double>(l));
  for (int i = 0; i < l; ++i) {
    for (int j = 0; j < l; ++j) cost[i][j] = match_cost(estimated[j], truth[i]);
  }
  if (l > 6) return hungarian(cost);
  std::vector<int> perm(l);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (int i = 0; i < l; ++i) c += cost[i][perm[i]];
    if (c < best_cost) {
      best_cost = c;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// ---------------------------------------------------------------------------
// Experiment

namespace {

constexpr std::uint64_t kNoiseKey = 0x6e6f697365ULL;

enum ParamIndex { kPhiAz, kPhiEl, kThetaAz, kThetaEl, kTauM, kGamma, kOmega, kParamCount };
const char* const kParamMetric[kParamCount] = {"rmse_phi_az", "rmse_phi_el", "rmse_theta_az",
                                               "rmse_theta_el", "rmse_tau_m", "rmse_gamma",
                                               "rmse_omega"};

struct TrialOutcome {
  bool failed = false;
  std::string failure;
  // [path][param] squared errors; kOmega holds the mean over the five dimensions.
  std::vector<std::array<double, kParamCount>> err2;
  bool has_pos = false;
  double pos_err2 = 0.0;
  RateTerms rate;
  double runtime_s = 0.0;
};

struct Context {
  const ExperimentConfig* cfg = nullptr;
  std::vector<PathParams> truth;
  std::vector<AngularFreqs> truth_freqs;
  std::array<BeamTransform, 4> transforms;
  BeamspaceTensor clean;
  ArrayFrames frames;
  std::vector<double> n0;  // per SNR
  std::vector<Method> sim_methods;
};

EspritEstimate estimate_with(Method m, const BeamspaceTensor& noisy, const Context& ctx) {
  const ExperimentConfig& cfg = *ctx.cfg;
  const int l = static_cast<int>(ctx.truth.size());
  if (m == Method::tensor) {
    return tensor_esprit_pipeline(noisy, ctx.transforms, l, cfg.scenario.delta_f, cfg.cp);
  }
  EspritOptions opts;
  opts.method = m == Method::matrix_fast ? SubspaceMethod::fast : SubspaceMethod::dense;
  opts.delta_f = cfg.scenario.delta_f;
  if (cfg.lanczos_steps) opts.fast.steps = *cfg.lanczos_steps;
  return esprit_pipeline(noisy, ctx.transforms, l, cfg.l5, opts);
}

TrialOutcome run_trial(Method m, const BeamspaceTensor& noisy, double n0, const Context& ctx) {
  (void)n0;
  TrialOutcome out;
  const ExperimentConfig& cfg = *ctx.cfg;
  const std::size_t l = ctx.truth.size();
  try {
    const auto t0 = std::chrono::steady_clock::now();
    const EspritEstimate est = estimate_with(m, noisy, ctx);
    out.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!est.diagnostics.clamped_paths.empty()) {
      out.failed = true;
      out.failure = "out-of-domain frequency";
      return out;
    }
    const std::vector<int> perm = match_paths(est.freqs, ctx.truth_freqs);
    std::vector<PathParams> ordered(l);
    out.err2.resize(l);
    for (std::size_t i = 0; i < l; ++i) {
      const auto j = static_cast<std::size_t>(perm[i]);
      const PathParams& e = est.params[j];
      const PathParams& t = ctx.truth[i];
      ordered[i] = e;
      auto& r = out.err2[i];
      r[kPhiAz] = std::pow(e.phi_az - t.phi_az, 2);
      r[kPhiEl] = std::pow(e.phi_el - t.phi_el, 2);
      r[kThetaAz] = std::pow(e.theta_az - t.theta_az, 2);
      r[kThetaEl] = std::pow(e.theta_el - t.theta_el, 2);
      r[kTauM] = std::pow(kSpeedOfLight * (e.tau - t.tau), 2);
      r[kGamma] = std::norm(e.gamma - t.gamma);
      double w = 0.0;
      for (std::size_t n = 0; n < 5; ++n) w += std::pow(wrap_angle(est.freqs[j][n] - ctx.truth_freqs[i][n]), 2);
      r[kOmega] = w / 5.0;
    }
    if (cfg.localization) {
      const LocalizationResult loc = localize(ordered, cfg.scenario.p_t,
                                              localization_weights(ordered, cfg.weights), ctx.frames);
      out.has_pos = true;
      out.pos_err2 = (loc.p_hat - cfg.scenario.p_r).squaredNorm();
    }
    if (cfg.rate) out.rate = rate_terms(ordered, ctx.truth, cfg.scenario.m, cfg.scenario.delta_f);
  } catch (const Error& e) {
    out = TrialOutcome{};
    out.failed = true;
    out.failure = e.what();
  }
  return out;
}

std::vector<std::size_t> class_members(const std::string& cls, std::size_t l) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < l; ++i) {
    if (cls == "all" || (cls == "los" && i == 0) || (cls == "nlos" && i > 0)) idx.push_back(i);
  }
  return idx;
}

std::vector<std::string> path_classes(std::size_t l) {
  if (l > 1) return {"los", "nlos", "all"};
  return {"los", "all"};
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void aggregate_sim(Method m, double snr_db, double n0, const std::vector<TrialOutcome>& trials,
                   const Context& ctx, ExperimentResult& res, bool dump) {
  const ExperimentConfig& cfg = *ctx.cfg;
  const std::string name = to_string(m);
  const std::size_t l = ctx.truth.size();
  int failures = 0;
  for (const auto& t : trials) failures += t.failed ? 1 : 0;
  const int n = static_cast<int>(trials.size());
  const int ok = n - failures;
  auto row = [&](const std::string& cls, const std::string& metric, double v) {
    res.rows.push_back(MetricRow{name, snr_db, cls, metric, v, n, failures});
  };
  if (ok > 0) {
    for (const auto& cls : path_classes(l)) {
      const auto members = class_members(cls, l);
      for (int p = 0; p < kParamCount; ++p) {
        double acc = 0.0;
        for (const auto& t : trials) {
          if (t.failed) continue;
          for (std::size_t i : members) acc += t.err2[i][static_cast<std::size_t>(p)];
        }
        row(cls, kParamMetric[p], std::sqrt(acc / (static_cast<double>(ok) * members.size())));
      }
    }
    if (cfg.localization) {
      double acc = 0.0;
      for (const auto& t : trials) acc += t.failed ? 0.0 : t.pos_err2;
      row("all", "rmse_pos_m", std::sqrt(acc / ok));
    }
    if (cfg.rate) {
      const int m5 = cfg.scenario.m[4];
      RealVector mean_i = RealVector::Zero(m5);
      for (const auto& t : trials) {
        if (!t.failed) mean_i += t.rate.interference;
      }
      mean_i /= ok;
      double acc = 0.0;
      for (const auto& t : trials) {
        if (t.failed) continue;
        acc += effective_rate(t.rate.signal, mean_i, n0, cfg.scenario.e_s, cfg.scenario.n_c,
                              cfg.scenario.n_p);
      }
      row("all", "rate_bps_hz", acc / ok);
    }
    std::vector<double> times;
    for (const auto& t : trials) {
      if (!t.failed) times.push_back(t.runtime_s);
    }
    res.runtime_rows.push_back(MetricRow{name, snr_db, "all", "runtime_s", median(times), n, failures});
  }
  if (dump) {
    for (int k = 0; k < n; ++k) {
      const auto& t = trials[static_cast<std::size_t>(k)];
      if (t.failed) {
        res.dump.push_back(TrialRecord{name, snr_db, k, -1, "failed", 1.0});
        continue;
      }
      for (std::size_t i = 0; i < l; ++i) {
        for (int p = 0; p < kParamCount; ++p) {
          res.dump.push_back(TrialRecord{name, snr_db, k, static_cast<int>(i),
                                         std::string(kParamMetric[p]).substr(5) + "_err2",
                                         t.err2[i][static_cast<std::size_t>(p)]});
        }
      }
      if (t.has_pos) res.dump.push_back(TrialRecord{name, snr_db, k, -1, "pos_m_err2", t.pos_err2});
    }
  }
}

void aggregate_analytic(const Context& ctx, ExperimentResult& res) {
  const ExperimentConfig& cfg = *ctx.cfg;
  const std::size_t l = ctx.truth.size();
  PerturbationKit kit;
  std::string failure;
  bool pos_ok = cfg.localization;
  try {
    kit = build_xi_upsilon(ctx.truth, ctx.transforms, cfg.scenario.m[4], cfg.l5, cfg.scenario.delta_f);
    build_kappa(kit, ctx.transforms);
  } catch (const Error& e) {
    failure = e.what();
  }
  if (failure.empty() && pos_ok) {
    try {
      build_psi(kit, cfg.scenario.p_t, ctx.frames, localization_weights(ctx.truth, cfg.weights));
    } catch (const Error&) {
      pos_ok = false;
    }
  }
  for (std::size_t s = 0; s < cfg.snr_grid_db.size(); ++s) {
    const double snr = cfg.snr_grid_db[s];
    const double n0 = ctx.n0[s];
    if (!failure.empty()) {
      res.rows.push_back(MetricRow{"analytic", snr, "all", "unavailable", 0.0, 1, 1});
      continue;
    }
    const auto pr = analytic_param_rmse(kit, n0, cfg.scenario.n_p, cfg.scenario.e_s);
    for (const auto& cls : path_classes(l)) {
      const auto members = class_members(cls, l);
      for (int p = 0; p < kParamCount; ++p) {
        double acc = 0.0;
        for (std::size_t i : members) {
          const ParamRmse& r = pr[i];
          double v = 0.0;
          switch (p) {
            case kPhiAz: v = r.phi_az; break;
            case kPhiEl: v = r.phi_el; break;
            case kThetaAz: v = r.theta_az; break;
            case kThetaEl: v = r.theta_el; break;
            case kTauM: v = r.tau_m; break;
            case kGamma: v = r.gamma; break;
            default: {
              double w = 0.0;
              for (double x : r.omega) w += x * x;
              v = std::sqrt(w / 5.0);
            }
          }
          acc += v * v;
        }
        res.rows.push_back(MetricRow{"analytic", snr, cls, kParamMetric[p],
                                     std::sqrt(acc / members.size()), 1, 0});
      }
    }
    if (pos_ok) {
      res.rows.push_back(MetricRow{"analytic", snr, "all", "rmse_pos_m",
                                   analytic_pos_rmse(kit, n0, cfg.scenario.n_p, cfg.scenario.e_s), 1, 0});
    }
  }
}

template <typename Fn>
void parallel_for(int count, int threads, Fn&& fn) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex err_mutex;
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& run) {
  validate_experiment(cfg);
  Context ctx;
  ctx.cfg = &cfg;
  ctx.truth = params_from_geometry(cfg.scenario);
  for (const auto& p : ctx.truth) ctx.truth_freqs.push_back(to_angular(p, cfg.scenario.delta_f));
  ctx.transforms = make_transforms(cfg.scenario, ctx.truth);
  ctx.clean = synth_beamspace_tensor(ctx.truth, ctx.transforms, cfg.scenario);
  ctx.frames = frames_of(cfg.scenario);
  for (double s : cfg.snr_grid_db) {
    ctx.n0.push_back(noise_for_snr(ctx.truth, ctx.transforms, cfg.scenario, s));
  }
  bool analytic = false;
  for (Method m : cfg.methods) {
    if (m == Method::analytic) {
      analytic = true;
    } else {
      ctx.sim_methods.push_back(m);
    }
  }

  const int n_snr = static_cast<int>(cfg.snr_grid_db.size());
  const int n_meth = static_cast<int>(ctx.sim_methods.size());
  // outcomes[method][snr][trial]
  std::vector<std::vector<std::vector<TrialOutcome>>> outcomes(
      n_meth, std::vector<std::vector<TrialOutcome>>(n_snr, std::vector<TrialOutcome>(cfg.trials)));
  if (n_meth > 0) {
    parallel_for(n_snr * cfg.trials, run.threads, [&](int item) {
      const int s = item / cfg.trials;
      const int t = item % cfg.trials;
      Rng rng = cfg.common_noise
                    ? make_stream(cfg.seed, {kNoiseKey, static_cast<std::uint64_t>(t)})
                    : make_stream(cfg.seed, {kNoiseKey, static_cast<std::uint64_t>(s),
                                             static_cast<std::uint64_t>(t)});
      ObservationConfig obs{cfg.scenario.n_p, cfg.scenario.e_s, ctx.n0[static_cast<std::size_t>(s)],
                            cfg.scenario.noise_mode};
      const BeamspaceTensor noisy = observe_and_estimate(ctx.clean, obs, rng);
      for (int m = 0; m < n_meth; ++m) {
        outcomes[m][s][t] = run_trial(ctx.sim_methods[static_cast<std::size_t>(m)], noisy,
                                      ctx.n0[static_cast<std::size_t>(s)], ctx);
      }
    });
  }

  ExperimentResult res;
  for (int m = 0; m < n_meth; ++m) {
    for (int s = 0; s < n_snr; ++s) {
      aggregate_sim(ctx.sim_methods[static_cast<std::size_t>(m)], cfg.snr_grid_db[s], ctx.n0[s],
                    outcomes[m][s], ctx, res, run.dump_trials);
      for (const auto& t : outcomes[m][s]) {
        res.sim_trials += 1;
        res.sim_failures += t.failed ? 1 : 0;
      }
    }
  }
  if (analytic) aggregate_analytic(ctx, res);
  if (cfg.rate) {
    for (int s = 0; s < n_snr; ++s) {
      res.rows.push_back(MetricRow{"perfect_csi", cfg.snr_grid_db[s], "all", "rate_bps_hz",
                                   perfect_csi_rate(ctx.truth, cfg.scenario.m, cfg.scenario.delta_f,
                                                    ctx.n0[s], cfg.scenario.e_s, cfg.scenario.n_c,
                                                    cfg.scenario.n_p),
                                   1, 0});
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Output

std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10e", v);
  return buf;
}

namespace {

std::string format_snr(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

bool is_fig3(const std::string& m) {
  return m != "rmse_pos_m" && m != "rate_bps_hz" && m != "rmse_omega" && m != "runtime_s";
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::invalid_input, "cannot write '" + p.string() + "'");
  out << text;
}

}  // namespace

std::string rows_to_csv(const std::vector<MetricRow>& rows) {
  std::ostringstream os;
  os << "method,snr_db,path_class,metric,value,trials,failures\n";
  for (const auto& r : rows) {
    os << r.method << ',' << format_snr(r.snr_db) << ',' << r.path_class << ',' << r.metric << ','
       << format_value(r.value) << ',' << r.trials << ',' << r.failures << '\n';
  }
  return os.str();
}

void write_outputs(const ExperimentResult& result, const std::string& dir) {
  const std::filesystem::path d(dir);
  std::filesystem::create_directories(d);
  std::vector<MetricRow> fig3, fig4, fig5;
  for (const auto& r : result.rows) {
    if (r.metric == "rmse_pos_m") {
      fig4.push_back(r);
    } else if (r.metric == "rate_bps_hz" || r.metric == "rmse_omega") {
      fig5.push_back(r);
    } else if (is_fig3(r.metric)) {
      fig3.push_back(r);
    }
  }
  write_file(d / "metrics.csv", rows_to_csv(result.rows));
  write_file(d / "fig3.csv", rows_to_csv(fig3));
  write_file(d / "fig4.csv", rows_to_csv(fig4));
  write_file(d / "fig5.csv", rows_to_csv(fig5));
  write_file(d / "runtime.csv", rows_to_csv(result.runtime_rows));
  if (!result.dump.empty()) {
    std::ostringstream os;
    os << "method,snr_db,trial,path,metric,value\n";
    for (const auto& t : result.dump) {
      os << t.method << ',' << format_snr(t.snr_db) << ',' << t.trial << ',' << t.path << ','
         << t.metric << ',' << format_value(t.value) << '\n';
    }
    write_file(d / "trials.csv", os.str());
  }
}

// ---------------------------------------------------------------------------
// Runtime sweep

Scenario scenario_with_paths(const Scenario& base, int l) {
  if (l < 1) throw Error(ErrorCode::invalid_input, "scenario_with_paths: need at least one path");
  Scenario sc = base;
  const Vec3 centre = base.scatterers.empty() ? Vec3{10.0, 2.5, 0.0} : base.scatterers.front();
  sc.scatterers.clear();
  for (int k = 0; k + 1 < l; ++k) {
    if (k == 0) {
      sc.scatterers.push_back(centre);
      continue;
    }
    const double a = 2.0 * kPi * (k - 1) / std::max(1, l - 2) + 0.4;
    sc.scatterers.push_back(centre + Vec3{2.0 * std::cos(a), 2.0 * std::sin(a), 0.0});
  }
  return sc;
}

std::vector<RuntimePoint> runtime_sweep(const Scenario& base, const std::vector<int>& path_counts,
                                        int repeats, const CpOptions& cp) {
  std::vector<RuntimePoint> out;
  for (int l : path_counts) {
    const Scenario sc = scenario_with_paths(base, l);
    const auto truth = params_from_geometry(sc);
    const auto tr = make_transforms(sc, truth);
    const BeamspaceTensor clean = synth_beamspace_tensor(truth, tr, sc);
    const double n0 = noise_for_snr(truth, tr, sc, 40.0);
    Rng rng = make_stream(sc.seed, {0x72756e74ULL, static_cast<std::uint64_t>(l)});
    const BeamspaceTensor noisy =
        observe_and_estimate(clean, ObservationConfig{sc.n_p, sc.e_s, n0, sc.noise_mode}, rng);
    std::vector<double> tp, tt;
    for (int r = 0; r < repeats; ++r) {
      EspritOptions opts;
      opts.method = SubspaceMethod::fast;
      opts.delta_f = sc.delta_f;
      auto t0 = std::chrono::steady_clock::now();
      (void)esprit_pipeline(noisy, tr, l, 0, opts);
      auto t1 = std::chrono::steady_clock::now();
      (void)tensor_esprit_pipeline(noisy, tr, l, sc.delta_f, cp);
      auto t2 = std::chrono::steady_clock::now();
      tp.push_back(std::chrono::duration<double>(t1 - t0).count());
      tt.push_back(std::chrono::duration<double>(t2 - t1).count());
    }
    out.push_back(RuntimePoint{l, median(tp), median(tt)});
  }
  return out;
}

}  // namespace bsesprit
