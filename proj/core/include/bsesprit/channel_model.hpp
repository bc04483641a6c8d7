// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bsesprit/rng.hpp"
#include "bsesprit/shift_invariance.hpp"
#include "bsesprit/types.hpp"

namespace bsesprit {

struct PathParams {
  double phi_az = 0.0;    // AOD azimuth, rad, local to the Tx array
  double phi_el = 0.0;    // AOD elevation
  double theta_az = 0.0;  // AOA azimuth, local to the Rx array
  double theta_el = 0.0;  // AOA elevation
  double tau = 0.0;       // s
  Complex gamma{0.0, 0.0};
};

struct AngularFreqs {
  std::array<double, 5> omega{};
  double& operator[](std::size_t n) { return omega[n]; }
  double operator[](std::size_t n) const { return omega[n]; }
};

enum class BeamKind { dft, directional, custom };

BeamKind beam_kind_from_string(const std::string& s);
std::string to_string(BeamKind kind);

struct BeamTransform {
  ComplexMatrix t;  // M_n x N_n
  ComplexMatrix f;  // N_n x N_n
  ComplexMatrix q;  // N_n x N_n
  SelectorPair selectors;
  bool exact_shift = false;
  int q_generators = 0;
  BeamKind kind = BeamKind::custom;
  std::vector<double> grid;

  int m() const { return static_cast<int>(t.rows()); }
  int n() const { return static_cast<int>(t.cols()); }
};

struct BeamConfig {
  BeamKind kind = BeamKind::dft;
  // Per spatial dimension of this side: explicit grid (custom) or focus frequency.
  std::array<std::vector<double>, 2> custom_grid{};
  std::optional<std::array<double, 2>> focus;
};

enum class NoiseMode { direct, pilot };

struct Scenario {
  Vec3 p_t{20.0, 5.0, 8.0};
  Vec3 p_r{0.0, 5.0, 1.5};
  std::vector<Vec3> scatterers{Vec3{10.0, 2.5, 0.0}};
  std::array<int, 5> m{8, 8, 8, 8, 500};
  std::array<int, 4> n{4, 4, 4, 4};
  double delta_f = 120e3;
  double f_c = 30e9;
  int n_p = 32;
  int n_c = 600;
  double e_s = 1.0;
  double n0 = 1.0;
  std::uint64_t seed = 1;
  BeamConfig tx_beams;
  BeamConfig rx_beams;
  double los_power = 1.0;   // ς for the LOS path
  double nlos_power = 0.1;  // ς for scattered paths
  // Sign of the global x axis in each array's local frame (broadside direction).
  int tx_facing = 0;  // 0: derive from geometry
  int rx_facing = 0;
  NoiseMode noise_mode = NoiseMode::direct;

  double wavelength() const { return kSpeedOfLight / f_c; }
  int path_count() const { return 1 + static_cast<int>(scatterers.size()); }
  int resolved_tx_facing() const;
  int resolved_rx_facing() const;
};

struct BeamspaceTensor {
  std::array<int, 5> dims{};  // N1, N2, N3, N4, M5
  ComplexVector values;       // row-major, last index fastest

  Eigen::Index size() const { return values.size(); }
  Eigen::Index blocks() const {
    return static_cast<Eigen::Index>(dims[0]) * dims[1] * dims[2] * dims[3];
  }
};

struct LinkMetrics {
  double signal_power = 0.0;
  double noise_power = 0.0;
  double snr_linear = 0.0;
  double snr_db = 0.0;
  std::vector<double> path_power;
};

ComplexVector steering_vector(int m, double omega);

// Unit direction in global coordinates for local (az, el) on an array facing +x (facing=1) or -x.
Vec3 direction_vector(double az, double el, int facing);

std::vector<PathParams> params_from_geometry(const Scenario& scenario, Rng& rng);
std::vector<PathParams> params_from_geometry(const Scenario& scenario);

AngularFreqs to_angular(const PathParams& p, double delta_f);
// Throws out_of_domain if the frequencies do not map back to a valid parameter set.
PathParams from_angular(const AngularFreqs& w, double delta_f);
// Clamps into the valid domain instead; clamped is set when that happened.
PathParams from_angular_clamped(const AngularFreqs& w, double delta_f, bool& clamped);

std::vector<double> beam_grid(BeamKind kind, int m, int n, double focus);
BeamTransform make_beam_transform(BeamKind kind, int m, int n, const std::vector<double>& grid);
BeamTransform make_custom_transform(const ComplexMatrix& t);

// Four spatial transforms. Focus frequencies default to the mean path frequency per dimension.
std::array<BeamTransform, 4> make_transforms(const Scenario& scenario,
                                             const std::vector<PathParams>& paths);

// T_n^H A_n for the given path frequencies in that dimension.
ComplexMatrix beam_factor(const BeamTransform& transform, const std::vector<double>& omegas);
ComplexMatrix steering_matrix(int m, const std::vector<double>& omegas);
ComplexMatrix khatri_rao(const std::vector<ComplexMatrix>& factors);

// B1 ⊙ B2 ⊙ B3 ⊙ B4 ⊙ A5^(m5) for a list of frequency vectors.
ComplexMatrix beamspace_manifold(const std::vector<AngularFreqs>& freqs,
                                 const std::array<BeamTransform, 4>& transforms, int m5);

BeamspaceTensor synth_beamspace_tensor(const std::vector<PathParams>& paths,
                                       const std::array<BeamTransform, 4>& transforms,
                                       const Scenario& scenario);

struct ObservationConfig {
  int n_p = 32;
  double e_s = 1.0;
  double n0 = 0.0;
  NoiseMode mode = NoiseMode::direct;
};

BeamspaceTensor observe_and_estimate(const BeamspaceTensor& tensor, const ObservationConfig& obs,
                                     Rng& rng);
BeamspaceTensor observe_and_estimate(const BeamspaceTensor& tensor, const Scenario& scenario,
                                     Rng& rng);

LinkMetrics link_metrics(const std::vector<PathParams>& paths,
                         const std::array<BeamTransform, 4>& transforms, const Scenario& scenario);

// N0 that realizes the requested SNR for this scenario's signal power.
double noise_for_snr(const std::vector<PathParams>& paths,
                     const std::array<BeamTransform, 4>& transforms, const Scenario& scenario,
                     double snr_db);

Scenario scenario_from_json(const std::string& text);
Scenario load_scenario(const std::string& path);
std::string scenario_to_json(const Scenario& scenario);

}  // namespace bsesprit
