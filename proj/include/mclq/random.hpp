#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace mclq {

/// Mixes (seed, stream) into an independent 64-bit seed (splitmix64 finalizer).
/// Path i of a generator call uses derive_seed(seed, i), so it does not depend
/// on how many paths were requested.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Seeded generator with portable output: the engine is std::mt19937_64 and the
/// uniform / Gaussian conversions are done here instead of through the
/// implementation-defined std distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on the open interval (0, 1).
  double uniform();
  /// Standard normal via the Box-Muller transform.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Index drawn with probability proportional to weights[i].
  std::size_t categorical(std::span<const double> weights);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mclq
