#include "stork/bigint.hpp"

#include <algorithm>
#include <array>

#include <openssl/evp.h>

#include "stork/errors.hpp"

namespace stork {

Bytes to_bytes(const BigUint& value) {
  if (value == 0) return {};
  std::size_t count = (mpz_sizeinbase(value.get_mpz_t(), 2) + 7) / 8;
  Bytes out(count);
  std::size_t written = 0;
  mpz_export(out.data(), &written, 1, 1, 1, 0, value.get_mpz_t());
  out.resize(written);
  return out;
}

Bytes to_bytes_fixed(const BigUint& value, std::size_t width) {
  Bytes raw = to_bytes(value);
  if (raw.size() > width) {
    throw Error(ErrorCode::out_of_range, "integer does not fit in " + std::to_string(width) + " bytes");
  }
  Bytes out(width - raw.size(), 0);
  out.insert(out.end(), raw.begin(), raw.end());
  return out;
}

BigUint from_bytes(ByteView bytes) {
  BigUint out;
  if (!bytes.empty()) mpz_import(out.get_mpz_t(), bytes.size(), 1, 1, 1, 0, bytes.data());
  return out;
}

std::size_t bit_length(const BigUint& value) {
  if (value == 0) return 0;
  return mpz_sizeinbase(value.get_mpz_t(), 2);
}

BigUint mod_pow(const BigUint& base, const BigUint& exponent, const BigUint& modulus) {
  BigUint out;
  mpz_powm(out.get_mpz_t(), base.get_mpz_t(), exponent.get_mpz_t(), modulus.get_mpz_t());
  return out;
}

BigUint mod_inverse(const BigUint& value, const BigUint& modulus) {
  BigUint out;
  if (mpz_invert(out.get_mpz_t(), value.get_mpz_t(), modulus.get_mpz_t()) == 0) {
    throw Error(ErrorCode::invalid_argument, "value is not invertible modulo N");
  }
  return out;
}

BigUint gcd(const BigUint& a, const BigUint& b) {
  BigUint out;
  mpz_gcd(out.get_mpz_t(), a.get_mpz_t(), b.get_mpz_t());
  return out;
}

std::string base64_encode(ByteView bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                          static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

Bytes base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw Error(ErrorCode::malformed, "base64 length not a multiple of 4");
  auto valid = [](char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '+' ||
           c == '/';
  };
  std::size_t padding = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (c == '=') {
      if (i + 2 < text.size()) throw Error(ErrorCode::malformed, "misplaced base64 padding");
      ++padding;
    } else if (!valid(c) || padding > 0) {
      throw Error(ErrorCode::malformed, "invalid base64 character");
    }
  }
  Bytes out(3 * (text.size() / 4));
  if (text.empty()) return out;
  int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                          static_cast<int>(text.size()));
  if (n < 0) throw Error(ErrorCode::malformed, "base64 decode failed");
  out.resize(static_cast<std::size_t>(n) - padding);
  return out;
}

std::string to_base64(const BigUint& value) { return base64_encode(to_bytes(value)); }

BigUint from_base64(std::string_view text) { return from_bytes(base64_decode(text)); }

std::string to_hex(ByteView bytes) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0x0f]);
  }
  return out;
}

Bytes from_hex(std::string_view text) {
  if (text.size() % 2 != 0) throw Error(ErrorCode::malformed, "odd hex length");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw Error(ErrorCode::malformed, "invalid hex digit");
  };
  Bytes out(text.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(nibble(text[2 * i]) << 4 | nibble(text[2 * i + 1]));
  }
  return out;
}

BigUint from_decimal(std::string_view text) {
  if (text.empty() || !std::all_of(text.begin(), text.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw Error(ErrorCode::malformed, "not a decimal integer: '" + std::string(text) + "'");
  }
  return BigUint(std::string(text), 10);
}

std::string to_decimal(const BigUint& value) { return value.get_str(10); }

}  // namespace stork
