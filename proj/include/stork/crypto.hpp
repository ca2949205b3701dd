#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>

#include "stork/bigint.hpp"
#include "stork/random.hpp"

namespace stork {

// Key roles keep the ticket-signing key, transport encryption keys and
// bundle-signing keys apart. Every private-key operation checks the role.
enum class KeyRole { ticket_signing, encryption, entity_signing };

std::string_view to_string(KeyRole role);
KeyRole key_role_from_string(std::string_view text);

inline constexpr std::size_t kDefaultKeyBits = 2048;
inline const BigUint kDefaultPublicExponent = 65537;

struct RsaPublicKey {
  BigUint modulus;
  BigUint exponent;

  std::size_t bit_length() const;
  /// Length in bytes of an encoded group element.
  std::size_t byte_length() const;

  friend bool operator==(const RsaPublicKey&, const RsaPublicKey&) = default;
};

class RsaKeyPair {
 public:
  /// Builds a keypair from known primes. Throws when gcd(e, (p-1)(q-1)) != 1.
  static RsaKeyPair from_primes(const BigUint& p, const BigUint& q, const BigUint& e, KeyRole role);

  const BigUint& modulus() const { return public_.modulus; }
  const BigUint& public_exponent() const { return public_.exponent; }
  const BigUint& private_exponent() const { return d_; }
  const BigUint& prime_p() const { return p_; }
  const BigUint& prime_q() const { return q_; }
  const RsaPublicKey& public_key() const { return public_; }
  std::size_t bit_length() const { return public_.bit_length(); }
  KeyRole role() const { return role_; }

  /// x^d mod N (CRT). `required` is checked against the key role.
  BigUint private_op(const BigUint& x, KeyRole required) const;

 private:
  RsaKeyPair() = default;

  RsaPublicKey public_;
  BigUint d_, p_, q_, dp_, dq_, q_inv_;
  KeyRole role_ = KeyRole::encryption;
};

/// Supported sizes: 512 (tests only), 1024, 2048, 4096.
RsaKeyPair generate_keypair(std::size_t bits, RandomSource& rng, KeyRole role = KeyRole::encryption,
                            const BigUint& e = kDefaultPublicExponent);

// ---------------------------------------------------------------------------
// Chaum blind signatures

struct BlindingFactor {
  BigUint r;
  BigUint r_inverse;

  /// Requires 1 <= r < N and gcd(r, N) = 1.
  static BlindingFactor from(const BigUint& r, const RsaPublicKey& pub);
};

inline constexpr std::size_t kDefaultBlindingBits = 128;

/// Strong factor: `bits` random bits, retried until invertible mod N.
BlindingFactor make_blinding_factor(const RsaPublicKey& pub, RandomSource& rng,
                                    std::size_t bits = kDefaultBlindingBits);

/// (message * r^e) mod N. Requires 0 < message < N.
BigUint blind(const BigUint& message, const BlindingFactor& factor, const RsaPublicKey& pub);
/// blinded^d mod N with a ticket-signing key.
BigUint sign_blinded(const BigUint& blinded, const RsaKeyPair& keypair);
/// s * r^-1 mod N.
BigUint unblind(const BigUint& signature, const BlindingFactor& factor, const RsaPublicKey& pub);

enum class SignatureMode { raw, hash_then_sign };

std::string_view to_string(SignatureMode mode);
SignatureMode signature_mode_from_string(std::string_view text);

/// The integer actually exponentiated: m itself, or SHA-256(bytes(m)) mod N.
BigUint message_representative(const BigUint& message, const RsaPublicKey& pub, SignatureMode mode);

bool verify_signature(const BigUint& message, const BigUint& signature, const RsaPublicKey& pub,
                      SignatureMode mode);

// ---------------------------------------------------------------------------
// Digests and RSA encryption

using Md5Digest = std::array<std::uint8_t, 16>;
using Sha256Digest = std::array<std::uint8_t, 32>;

Md5Digest md5_checksum(ByteView data);
Sha256Digest sha256(ByteView data);

/// PKCS#1 v1.5 type-2 encryption; output is exactly byte_length() bytes.
Bytes rsa_encrypt(ByteView message, const RsaPublicKey& pub, RandomSource& rng);
/// Throws decryption_failure on any padding error.
Bytes rsa_decrypt(ByteView ciphertext, const RsaKeyPair& keypair);

// ---------------------------------------------------------------------------
// Hybrid envelope: RC4-128 payload, RSA-wrapped stream key

/// RC4 keystream generator. Only ever used with a fresh key per message.
class Rc4 {
 public:
  explicit Rc4(ByteView key);

  void apply(std::span<std::uint8_t> data);
  std::uint8_t next();

 private:
  std::array<std::uint8_t, 256> s_{};
  std::uint8_t i_ = 0, j_ = 0;
};

inline constexpr std::size_t kStreamKeyBytes = 16;
inline constexpr std::size_t kDefaultMaxPlaintext = 1u << 20;

struct HybridEnvelope {
  Bytes evkey;
  Bytes cryp;

  friend bool operator==(const HybridEnvelope&, const HybridEnvelope&) = default;
};

HybridEnvelope hybrid_seal(ByteView plaintext, const RsaPublicKey& recipient, RandomSource& rng,
                           std::size_t max_plaintext = kDefaultMaxPlaintext);
Bytes hybrid_open(const HybridEnvelope& envelope, const RsaKeyPair& keypair);

// ---------------------------------------------------------------------------
// Weak millisecond-seeded generator and the opacity-factor brute force

struct WeakPrngState {
  std::int64_t seed_ms = 0;
  Bytes fingerprint;
  std::uint64_t counter = 0;
};

/// 48-bit LCG (multiplier 0x5DEECE66D, increment 0xB) seeded with
/// seed_ms XOR the first 8 bytes of SHA-256(fingerprint).
class WeakPrng {
 public:
  explicit WeakPrng(const WeakPrngState& state);

  std::uint32_t next_u32();

 private:
  std::uint64_t seed_;
};

/// decimal(rndInt32) ++ decimal(rndInt32), parsed base 10.
BigUint weak_opacity_factor(const WeakPrngState& state);

inline constexpr std::int64_t kMaxLinkWindowMs = 10'000'000;

/// Enumerates seed_ms over [lo, hi] and returns the seed whose weak factor r
/// satisfies blinded = published * r^e mod N.
std::optional<std::int64_t> link_blinded_ticket(const BigUint& blinded, const BigUint& published_ticket,
                                                const RsaPublicKey& pub, std::int64_t window_lo,
                                                std::int64_t window_hi, ByteView fingerprint,
                                                std::uint64_t counter = 0);

}  // namespace stork
