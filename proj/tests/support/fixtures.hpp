// SPDX-License-Identifier: Apache-2.0
// Shared scenario builders for the unit tests.
#pragma once

#include <array>
#include <vector>

#include "bsesprit/channel_model.hpp"
#include "bsesprit/md_esprit.hpp"

namespace fixture {

using namespace bsesprit;

// Table-1 geometry with M5 reduced to 64 and the 60 MHz bandwidth kept.
inline Scenario desk_scenario(BeamKind kind = BeamKind::dft) {
  Scenario sc;
  sc.m = {8, 8, 8, 8, 64};
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

inline Setup make_setup(const Scenario& sc) {
  Setup s;
  s.sc = sc;
  s.paths = params_from_geometry(sc);
  s.tr = make_transforms(sc, s.paths);
  s.h = synth_beamspace_tensor(s.paths, s.tr, sc);
  return s;
}

inline std::vector<AngularFreqs> freqs_of(const std::vector<PathParams>& paths, double delta_f) {
  std::vector<AngularFreqs> out;
  for (const auto& p : paths) out.push_back(to_angular(p, delta_f));
  return out;
}

// Identity transforms of size m in each spatial dimension (element-space ESPRIT).
inline std::array<BeamTransform, 4> identity_transforms(const std::array<int, 4>& m) {
  std::array<BeamTransform, 4> out;
  for (int d = 0; d < 4; ++d) out[d] = make_custom_transform(ComplexMatrix::Identity(m[d], m[d]));
  return out;
}

}  // namespace fixture
