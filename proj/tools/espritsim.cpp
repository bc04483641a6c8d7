// SPDX-License-Identifier: Apache-2.0
// espritsim: Monte-Carlo driver for the beamspace ESPRIT estimators.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>

#include "bsesprit/errors.hpp"
#include "bsesprit/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitTrials = 3;

using namespace bsesprit;

int default_threads() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

int report_trials(const ExperimentResult& res, double limit) {
  if (res.sim_trials > 0) {
    std::fprintf(stderr, "trials: %d, failures: %d (%.2f%%)\n", res.sim_trials, res.sim_failures,
                 100.0 * res.failure_rate());
  }
  if (res.failure_rate() > limit) {
    std::fprintf(stderr, "error: trial-failure rate exceeds %.1f%%\n", 100.0 * limit);
    return kExitTrials;
  }
  return kExitOk;
}

ExperimentConfig figure_config(const std::string& which, bool full, int trials) {
  ExperimentConfig cfg;
  cfg.scenario.m[4] = full ? 500 : 64;
  cfg.snr_grid_db = {-10, 0, 10, 20, 30, 40};
  cfg.trials = trials;
  cfg.common_noise = true;
  if (which == "3a" || which == "3b" || which == "3c" || which == "4") {
    cfg.methods = {Method::matrix_fast, Method::analytic};
    cfg.rate = false;
    cfg.localization = which == "4";
  } else if (which == "5") {
    cfg.methods = {Method::matrix_fast, Method::tensor};
    cfg.localization = false;
  }
  return cfg;
}

std::vector<MetricRow> select_rows(const std::string& which, const std::vector<MetricRow>& rows) {
  std::vector<MetricRow> out;
  for (const auto& r : rows) {
    bool keep = false;
    if (which == "3a") {
      keep = r.metric.rfind("rmse_phi", 0) == 0 || r.metric.rfind("rmse_theta", 0) == 0;
    } else if (which == "3b") {
      keep = r.metric == "rmse_tau_m";
    } else if (which == "3c") {
      keep = r.metric == "rmse_gamma";
    } else if (which == "4") {
      keep = r.metric == "rmse_pos_m";
    } else if (which == "5") {
      keep = r.metric == "rate_bps_hz" || r.metric == "rmse_omega";
    }
    if (keep) out.push_back(r);
  }
  return out;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path().empty() ? "." : p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::invalid_input, "cannot write '" + p.string() + "'");
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Beamspace multidimensional ESPRIT simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  int threads = default_threads();
  bool dump = false;
  auto* run = app.add_subcommand("run", "Run a Monte-Carlo experiment");
  run->add_option("--config", config_path, "Experiment config (JSON)")->required();
  run->add_option("--out", out_dir, "Output directory (overrides the config)");
  run->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  run->add_flag("--dump-trials", dump, "Also write per-trial squared errors");

  std::string validate_path;
  auto* validate = app.add_subcommand("validate-config", "Check an experiment config");
  validate->add_option("config", validate_path, "Experiment config (JSON)")->required();

  std::string which;
  std::string fig_out = "figures";
  bool full = false;
  int fig_trials = 200;
  auto* figures = app.add_subcommand("figures", "Regenerate one figure's CSV");
  figures->add_option("--which", which, "Figure")
      ->required()
      ->check(CLI::IsMember({"3a", "3b", "3c", "4", "5", "6"}));
  figures->add_option("--out", fig_out, "Output directory");
  figures->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  figures->add_option("--trials", fig_trials, "Trials per SNR")->check(CLI::PositiveNumber);
  figures->add_flag("--full", full, "Use the full 500-subcarrier configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*validate) {
      const ExperimentConfig cfg = load_experiment(validate_path);
      std::printf("ok: %d paths, %zu SNR points, %d trials\n", cfg.scenario.path_count(),
                  cfg.snr_grid_db.size(), cfg.trials);
      return kExitOk;
    }
    if (*run) {
      ExperimentConfig cfg = load_experiment(config_path);
      if (!out_dir.empty()) cfg.outputs = out_dir;
      const ExperimentResult res = run_experiment(cfg, RunOptions{threads, dump});
      write_outputs(res, cfg.outputs);
      std::fprintf(stderr, "wrote %s\n", cfg.outputs.c_str());
      return report_trials(res, cfg.failure_limit);
    }
    if (*figures) {
      const std::filesystem::path out = std::filesystem::path(fig_out) / ("fig" + which + ".csv");
      std::vector<MetricRow> rows;
      ExperimentResult all;
      double limit = 0.05;
      if (which == "6") {
        Scenario sc;
        sc.m[4] = full ? 500 : 64;
        for (const auto& p : runtime_sweep(sc, {2, 3, 4, 5, 6}, 5)) {
          const std::string metric = "runtime_s_l" + std::to_string(p.paths);
          rows.push_back(MetricRow{"matrix_fast", 40.0, "all", metric, p.proposed_s, 5, 0});
          rows.push_back(MetricRow{"tensor", 40.0, "all", metric, p.tensor_s, 5, 0});
        }
      } else {
        for (BeamKind kind : {BeamKind::dft, BeamKind::directional}) {
          ExperimentConfig cfg = figure_config(which, full, fig_trials);
          cfg.scenario.tx_beams.kind = kind;
          cfg.scenario.rx_beams.kind = kind;
          limit = cfg.failure_limit;
          const ExperimentResult res = run_experiment(cfg, RunOptions{threads, false});
          all.sim_trials += res.sim_trials;
          all.sim_failures += res.sim_failures;
          for (auto r : select_rows(which, res.rows)) {
            r.method += "/" + to_string(kind);
            rows.push_back(r);
          }
        }
      }
      write_text(out, rows_to_csv(rows));
      std::fprintf(stderr, "wrote %s\n", out.string().c_str());
      return report_trials(all, limit);
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.code() == ErrorCode::config_error ? kExitConfig : kExitFailure;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return kExitOk;
}
