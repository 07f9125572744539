#pragma once

#include "cfmm/types.hpp"

#include <cstdint>
#include <initializer_list>
#include <random>

namespace cfmm {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives independent, reproducible streams from a base seed and a tag path,
/// e.g. stream({kNoiseTag, iteration, phase}).
class SeedTree {
 public:
  explicit SeedTree(std::uint64_t base) : base_(base) {}

  std::uint64_t derive(std::initializer_list<std::uint64_t> tags) const {
    std::uint64_t s = splitmix64(base_);
    for (auto t : tags) s = splitmix64(s ^ splitmix64(t + 0x632be59bd9b4e019ULL));
    return s;
  }

  Rng stream(std::initializer_list<std::uint64_t> tags) const { return Rng(derive(tags)); }

  std::uint64_t base() const { return base_; }

 private:
  std::uint64_t base_;
};

/// Circularly-symmetric complex Gaussian with the given total variance.
inline cd complex_normal(Rng& rng, double variance) {
  if (variance <= 0.0) return {0.0, 0.0};
  std::normal_distribution<double> n(0.0, std::sqrt(variance / 2.0));
  const double re = n(rng);
  const double im = n(rng);
  return {re, im};
}

template <typename Real = double>
CMatrix<Real> complex_normal_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, Real variance) {
  CMatrix<Real> out(rows, cols);
  // Column-major fill order is part of the determinism contract.
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) out(r, c) = complex_normal(rng, variance);
  return out;
}

}  // namespace cfmm
