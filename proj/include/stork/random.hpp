#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string_view>

#include "stork/bigint.hpp"

namespace stork {

/// Byte-oriented random source. Every randomized operation in the library
/// takes one of these by reference; sources are never shared between threads.
class RandomSource {
 public:
  using result_type = std::uint64_t;

  virtual ~RandomSource() = default;

  virtual void fill(std::span<std::uint8_t> out) = 0;
  virtual std::uint64_t next_u64();

  /// Uniform integer in the closed range [lo, hi].
  std::uint64_t uniform(std::uint64_t lo, std::uint64_t hi);
  std::int64_t uniform_signed(std::int64_t lo, std::int64_t hi);
  /// Uniform double in [0, 1).
  double uniform_real();
  Bytes bytes(std::size_t count);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return next_u64(); }
};

/// Seedable generator for reproducible runs. `fork` derives an independent
/// child stream so subsystems do not perturb each other's sequences.
class DeterministicRng final : public RandomSource {
 public:
  explicit DeterministicRng(std::uint64_t seed);

  void fill(std::span<std::uint8_t> out) override;
  std::uint64_t next_u64() override;

  DeterministicRng fork(std::string_view label);

 private:
  std::mt19937_64 engine_;
};

/// Operating-system entropy (OpenSSL RAND_bytes).
class OsRng final : public RandomSource {
 public:
  void fill(std::span<std::uint8_t> out) override;
};

/// Uniform in [0, 2^bits).
BigUint random_bits(RandomSource& rng, std::size_t bits);
/// Uniform in [0, bound).
BigUint random_below(RandomSource& rng, const BigUint& bound);

}  // namespace stork
