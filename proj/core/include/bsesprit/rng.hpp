// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "bsesprit/types.hpp"

namespace bsesprit {

using Rng = std::mt19937_64;

// Derives an independent substream from a base seed and a list of keys
// (e.g. snr index, trial index). Same inputs give the same stream on every thread.
Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> keys = {});

std::uint64_t mix_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

// Fills v with iid circular complex Gaussian entries of the given variance.
void fill_complex_normal(Rng& rng, ComplexVector& v, double variance);

ComplexMatrix random_complex_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols);

double uniform01(Rng& rng);

}  // namespace bsesprit
