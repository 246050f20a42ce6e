#ifndef ISACSIM_RNG_HPP
#define ISACSIM_RNG_HPP

#include <cstdint>

#include "isacsim/types.hpp"

namespace isac {

/**
 * Deterministic random stream (xoshiro256++ core, splitmix64 seeding).
 *
 * All stochastic draws in the library go through this class so that a run is
 * reproducible bit-for-bit from its seed, independent of the standard
 * library's distribution implementations and of how work is scheduled.
 * Independent streams for batch items / workers are derived with stream().
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Derive an independent child stream. Same (seed, id) -> same stream.
  static Rng stream(std::uint64_t seed, std::uint64_t id);
  static Rng stream(std::uint64_t seed, std::uint64_t id_a, std::uint64_t id_b);

  std::uint64_t next_u64();

  /// Uniform on [0, 1).
  double uniform();
  /// Uniform on [a, b).
  double uniform(double a, double b);
  /// Uniform integer in {0, ..., n-1}, n >= 1. Rejection sampled (unbiased).
  std::uint64_t uniform_int(std::uint64_t n);
  /// Standard normal, Box-Muller with cached spare.
  double normal();
  /// Exponential with the given mean.
  double exponential(double mean);
  /// Uniform phase in [0, 2*pi).
  double phase();
  /// Circularly symmetric complex normal with E|z|^2 = var.
  cplx cnormal(double var);

 private:
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace isac

#endif
