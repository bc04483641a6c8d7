// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bsesprit/channel_model.hpp"
#include "bsesprit/md_esprit.hpp"
#include "bsesprit/slac.hpp"
#include "bsesprit/tensor_esprit.hpp"

namespace bsesprit {

enum class Method { matrix_dense, matrix_fast, tensor, analytic };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct ExperimentConfig {
  Scenario scenario;
  std::vector<double> snr_grid_db;
  int trials = 200;
  std::vector<Method> methods{Method::matrix_dense, Method::analytic};
  int l5 = 0;  // 0: auto
  std::string outputs = "out";
  std::uint64_t seed = 1;
  WeightRule weights = WeightRule::uniform;
  // Reuse the same unit-variance noise draw for a trial index at every SNR and method.
  bool common_noise = false;
  bool localization = true;
  bool rate = true;
  double failure_limit = 0.05;
  std::optional<int> lanczos_steps;
  CpOptions cp;
};

ExperimentConfig experiment_from_json(const std::string& text);
ExperimentConfig load_experiment(const std::string& path);
std::string experiment_to_json(const ExperimentConfig& cfg);

struct MetricRow {
  std::string method;
  double snr_db = 0.0;
  std::string path_class;  // los, nlos, all
  std::string metric;
  double value = 0.0;
  int trials = 0;
  int failures = 0;
};

struct TrialRecord {
  std::string method;
  double snr_db = 0.0;
  int trial = 0;
  int path = -1;  // -1 for per-trial quantities
  std::string metric;
  double value = 0.0;  // squared error, or the raw quantity for runtime
};

struct ExperimentResult {
  std::vector<MetricRow> rows;
  std::vector<MetricRow> runtime_rows;
  std::vector<TrialRecord> dump;
  int sim_trials = 0;
  int sim_failures = 0;
  double failure_rate() const {
    return sim_trials > 0 ? static_cast<double>(sim_failures) / sim_trials : 0.0;
  }
};

struct RunOptions {
  int threads = 1;
  bool dump_trials = false;
};

// perm[i] is the index of the estimate assigned to truth path i.
std::vector<int> match_paths(const std::vector<AngularFreqs>& estimated,
                             const std::vector<AngularFreqs>& truth);

ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& run = {});

// Files written: metrics.csv, fig3.csv, fig4.csv, fig5.csv, runtime.csv, and trials.csv if dumped.
void write_outputs(const ExperimentResult& result, const std::string& dir);
std::string rows_to_csv(const std::vector<MetricRow>& rows);
std::string format_value(double v);

struct RuntimePoint {
  int paths = 0;
  double proposed_s = 0.0;
  double tensor_s = 0.0;
};

// Places l-1 scatterers on a ring around the scenario's first scatterer and times both pipelines.
Scenario scenario_with_paths(const Scenario& base, int l);
std::vector<RuntimePoint> runtime_sweep(const Scenario& base, const std::vector<int>& path_counts,
                                        int repeats, const CpOptions& cp = {});

}  // namespace bsesprit
