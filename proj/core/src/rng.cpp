// SPDX-License-Identifier: Apache-2.0
#include "bsesprit/rng.hpp"

#include <cmath>

namespace bsesprit {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t state = seed;
  std::uint64_t h = splitmix64(state);
  for (std::uint64_t k : keys) {
    state ^= k + 0x632BE59BD9B4E019ULL + (h << 6) + (h >> 2);
    h = splitmix64(state);
  }
  return h;
}

Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t s = mix_seed(seed, keys);
  std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32),
                    static_cast<std::uint32_t>(keys.size())};
  return Rng(seq);
}

void fill_complex_normal(Rng& rng, ComplexVector& v, double variance) {
  std::normal_distribution<double> nd(0.0, std::sqrt(variance / 2.0));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double re = nd(rng);
    const double im = nd(rng);
    v(i) = Complex(re, im);
  }
}

ComplexMatrix random_complex_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  ComplexVector v(rows * cols);
  fill_complex_normal(rng, v, 1.0);
  return Eigen::Map<ComplexMatrix>(v.data(), rows, cols);
}

double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace bsesprit
