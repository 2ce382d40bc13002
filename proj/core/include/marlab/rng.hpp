#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace marlab {

/// Mixes a base seed with a stream index into an independent child seed
/// (splitmix64 finalizer). Used to derive per-episode / per-seed streams
/// from one run seed without correlated state.
std::uint64_t split_seed(std::uint64_t base, std::uint64_t stream);

/// Deterministic random source. All samplers are hand-rolled on top of the
/// fully-specified mt19937_64 stream so that identical seeds give identical
/// draws on every platform and compiler (std::*_distribution makes no such
/// guarantee).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi);

  /// Uniform integer in [0, n). Requires n >= 1.
  int uniform_int(int n);

  /// Standard normal via Box-Muller; consumes exactly two uniforms per call.
  double normal();

  /// Gamma(alpha, 1) via Marsaglia-Tsang, with the usual boost for alpha < 1.
  double gamma(double alpha);

  /// Fills `out` with a symmetric Dirichlet(alpha) sample.
  void dirichlet(double alpha, std::span<double> out);

  /// Samples an index from an (unnormalized is fine) nonnegative weight
  /// vector by inverse CDF walk.
  int categorical(std::span<const double> weights);

 private:
  std::mt19937_64 gen_;
};

}  // namespace marlab
