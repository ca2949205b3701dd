#include "stork/random.hpp"

#include <openssl/rand.h>

#include "stork/errors.hpp"

namespace stork {

std::uint64_t RandomSource::next_u64() {
  std::uint8_t buf[8];
  fill(buf);
  std::uint64_t out = 0;
  for (auto b : buf) out = out << 8 | b;
  return out;
}

std::uint64_t RandomSource::uniform(std::uint64_t lo, std::uint64_t hi) {
  if (lo > hi) throw Error(ErrorCode::invalid_argument, "uniform: empty range");
  std::uint64_t span = hi - lo;
  if (span == std::numeric_limits<std::uint64_t>::max()) return next_u64();
  std::uint64_t range = span + 1;
  std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % range;
  std::uint64_t draw;
  do {
    draw = next_u64();
  } while (draw >= limit);
  return lo + draw % range;
}

std::int64_t RandomSource::uniform_signed(std::int64_t lo, std::int64_t hi) {
  if (lo > hi) throw Error(ErrorCode::invalid_argument, "uniform: empty range");
  auto span = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo);
  return static_cast<std::int64_t>(static_cast<std::uint64_t>(lo) + uniform(0, span));
}

double RandomSource::uniform_real() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

Bytes RandomSource::bytes(std::size_t count) {
  Bytes out(count);
  fill(out);
  return out;
}

DeterministicRng::DeterministicRng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  engine_.seed(seq);
}

std::uint64_t DeterministicRng::next_u64() { return engine_(); }

void DeterministicRng::fill(std::span<std::uint8_t> out) {
  std::size_t i = 0;
  while (i < out.size()) {
    std::uint64_t word = engine_();
    for (int k = 0; k < 8 && i < out.size(); ++k, ++i) {
      out[i] = static_cast<std::uint8_t>(word >> (8 * k));
    }
  }
}

DeterministicRng DeterministicRng::fork(std::string_view label) {
  // FNV-1a over the label keeps forks with different labels apart.
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : label) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 1099511628211ULL;
  }
  return DeterministicRng(engine_() ^ h);
}

void OsRng::fill(std::span<std::uint8_t> out) {
  if (out.empty()) return;
  if (RAND_bytes(out.data(), static_cast<int>(out.size())) != 1) {
    throw Error(ErrorCode::invalid_argument, "RAND_bytes failed");
  }
}

BigUint random_bits(RandomSource& rng, std::size_t bits) {
  if (bits == 0) return 0;
  Bytes raw = rng.bytes((bits + 7) / 8);
  std::size_t excess = raw.size() * 8 - bits;
  raw[0] &= static_cast<std::uint8_t>(0xff >> excess);
  return from_bytes(raw);
}

BigUint random_below(RandomSource& rng, const BigUint& bound) {
  if (bound <= 0) throw Error(ErrorCode::invalid_argument, "random_below: non-positive bound");
  std::size_t bits = bit_length(bound);
  BigUint candidate;
  do {
    candidate = random_bits(rng, bits);
  } while (candidate >= bound);
  return candidate;
}

}  // namespace stork
