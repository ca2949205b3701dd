#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <gmpxx.h>

namespace stork {

using BigUint = mpz_class;
using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

/// Minimal big-endian magnitude; zero encodes as an empty byte string.
Bytes to_bytes(const BigUint& value);

/// Big-endian magnitude left-padded with zeros to exactly `width` bytes.
Bytes to_bytes_fixed(const BigUint& value, std::size_t width);

BigUint from_bytes(ByteView bytes);

std::size_t bit_length(const BigUint& value);

BigUint mod_pow(const BigUint& base, const BigUint& exponent, const BigUint& modulus);
BigUint mod_inverse(const BigUint& value, const BigUint& modulus);
BigUint gcd(const BigUint& a, const BigUint& b);

std::string base64_encode(ByteView bytes);
Bytes base64_decode(std::string_view text);

/// Big integers travel as base64 of their minimal big-endian magnitude.
std::string to_base64(const BigUint& value);
BigUint from_base64(std::string_view text);

std::string to_hex(ByteView bytes);
Bytes from_hex(std::string_view text);

BigUint from_decimal(std::string_view text);
std::string to_decimal(const BigUint& value);

inline ByteView as_bytes(std::string_view text) {
  return {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()};
}
inline Bytes to_byte_vector(std::string_view text) {
  auto view = as_bytes(text);
  return {view.begin(), view.end()};
}
inline std::string to_string(ByteView bytes) {
  return {reinterpret_cast<const char*>(bytes.data()), bytes.size()};
}

}  // namespace stork
