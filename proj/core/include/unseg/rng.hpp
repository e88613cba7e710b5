#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string>

namespace unseg {

// Seeded generator with distribution code written out explicitly so that
// streams are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  // Inclusive range.
  int uniform_int(int lo, int hi) { return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo) + 1)); }
  bool bernoulli(double p) { return uniform() < p; }
  double normal();

  std::string state() const;
  void set_state(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

// Mixes a base seed with stream keys (sample index, epoch, ...) into an
// independent seed via splitmix64.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

}  // namespace unseg
