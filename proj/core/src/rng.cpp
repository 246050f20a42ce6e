#include "isacsim/rng.hpp"

#include <cmath>

namespace isac {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) {
  std::uint64_t x = seed;
  for (auto& s : s_) s = splitmix64(x);
}

Rng Rng::stream(std::uint64_t seed, std::uint64_t id) {
  std::uint64_t x = seed;
  std::uint64_t mixed = splitmix64(x) ^ (id * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL);
  return Rng(mixed);
}

Rng Rng::stream(std::uint64_t seed, std::uint64_t id_a, std::uint64_t id_b) {
  std::uint64_t x = seed ^ (id_a * 0xd1342543de82ef95ULL);
  std::uint64_t mixed = splitmix64(x) ^ (id_b * 0xda942042e4dd58b5ULL + 0x9e3779b97f4a7c15ULL);
  return Rng(mixed);
}

std::uint64_t Rng::next_u64() {
  std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
  std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double a, double b) { return a + (b - a) * uniform(); }

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  // Rejection keeps the draw exactly uniform for any n.
  std::uint64_t limit = ~0ULL - (~0ULL % n);
  std::uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return v % n;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1, u2;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 2.0 * kPi * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

double Rng::exponential(double mean) {
  double u;
  do {
    u = uniform();
  } while (u <= 0.0);
  return -mean * std::log(u);
}

double Rng::phase() { return uniform(0.0, 2.0 * kPi); }

cplx Rng::cnormal(double var) {
  double s = std::sqrt(var / 2.0);
  double re = normal();
  double im = normal();
  return {s * re, s * im};
}

}  // namespace isac
