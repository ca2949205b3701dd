#include "stork/crypto.hpp"

#include <algorithm>
#include <string>

#include <openssl/evp.h>

#include "stork/errors.hpp"

namespace stork {

std::string_view to_string(KeyRole role) {
  switch (role) {
    case KeyRole::ticket_signing: return "ticket-signing";
    case KeyRole::encryption: return "encryption";
    case KeyRole::entity_signing: return "entity-signing";
  }
  return "unknown";
}

KeyRole key_role_from_string(std::string_view text) {
  if (text == "ticket-signing") return KeyRole::ticket_signing;
  if (text == "encryption") return KeyRole::encryption;
  if (text == "entity-signing") return KeyRole::entity_signing;
  throw Error(ErrorCode::invalid_argument, "unknown key role '" + std::string(text) + "'");
}

std::size_t RsaPublicKey::bit_length() const { return stork::bit_length(modulus); }
std::size_t RsaPublicKey::byte_length() const { return (bit_length() + 7) / 8; }

RsaKeyPair RsaKeyPair::from_primes(const BigUint& p, const BigUint& q, const BigUint& e, KeyRole role) {
  if (p == q || p < 3 || q < 3) throw Error(ErrorCode::invalid_argument, "primes must be distinct and > 2");
  BigUint pm1 = p - 1, qm1 = q - 1;
  BigUint phi = pm1 * qm1;
  if (gcd(e, phi) != 1) throw Error(ErrorCode::invalid_argument, "public exponent not coprime to phi(N)");
  RsaKeyPair kp;
  kp.public_.modulus = p * q;
  kp.public_.exponent = e;
  kp.d_ = mod_inverse(e, phi);
  kp.p_ = p;
  kp.q_ = q;
  kp.dp_ = kp.d_ % pm1;
  kp.dq_ = kp.d_ % qm1;
  kp.q_inv_ = mod_inverse(q, p);
  kp.role_ = role;
  return kp;
}

BigUint RsaKeyPair::private_op(const BigUint& x, KeyRole required) const {
  if (role_ != required) {
    throw Error(ErrorCode::policy, "key role is " + std::string(to_string(role_)) + ", operation needs " +
                                       std::string(to_string(required)));
  }
  if (x < 0 || x >= public_.modulus) throw Error(ErrorCode::out_of_range, "operand not in [0, N)");
  BigUint m1 = mod_pow(x % p_, dp_, p_);
  BigUint m2 = mod_pow(x % q_, dq_, q_);
  BigUint h = (q_inv_ * (m1 - m2)) % p_;
  if (h < 0) h += p_;
  return m2 + h * q_;
}

namespace {

BigUint random_prime(std::size_t bits, RandomSource& rng) {
  for (;;) {
    BigUint candidate = random_bits(rng, bits);
    mpz_setbit(candidate.get_mpz_t(), bits - 1);
    mpz_setbit(candidate.get_mpz_t(), bits - 2);
    mpz_setbit(candidate.get_mpz_t(), 0);
    // Walk odd candidates; restart if the walk overflows the bit length.
    for (int step = 0; step < 4096 && bit_length(candidate) == bits; ++step, candidate += 2) {
      if (mpz_probab_prime_p(candidate.get_mpz_t(), 30) > 0) return candidate;
    }
  }
}

}  // namespace

RsaKeyPair generate_keypair(std::size_t bits, RandomSource& rng, KeyRole role, const BigUint& e) {
  if (bits != 512 && bits != 1024 && bits != 2048 && bits != 4096) {
    throw Error(ErrorCode::unsupported_key_size, std::to_string(bits) + " bits");
  }
  for (;;) {
    BigUint p = random_prime(bits / 2, rng);
    BigUint q = random_prime(bits - bits / 2, rng);
    if (p == q) continue;
    if (gcd(e, (p - 1) * (q - 1)) != 1) continue;
    auto kp = RsaKeyPair::from_primes(p, q, e, role);
    if (kp.bit_length() == bits) return kp;
  }
}

BlindingFactor BlindingFactor::from(const BigUint& r, const RsaPublicKey& pub) {
  if (r < 1 || r >= pub.modulus) throw Error(ErrorCode::out_of_range, "blinding factor not in [1, N)");
  if (gcd(r, pub.modulus) != 1) throw Error(ErrorCode::invalid_argument, "blinding factor shares a factor with N");
  return {r, mod_inverse(r, pub.modulus)};
}

BlindingFactor make_blinding_factor(const RsaPublicKey& pub, RandomSource& rng, std::size_t bits) {
  for (;;) {
    BigUint r = random_bits(rng, bits);
    if (r > 1 && r < pub.modulus && gcd(r, pub.modulus) == 1) return BlindingFactor::from(r, pub);
  }
}

BigUint blind(const BigUint& message, const BlindingFactor& factor, const RsaPublicKey& pub) {
  if (message <= 0 || message >= pub.modulus) throw Error(ErrorCode::out_of_range, "message not in (0, N)");
  if (gcd(factor.r, pub.modulus) != 1) throw Error(ErrorCode::invalid_argument, "gcd(r, N) != 1");
  return (message * mod_pow(factor.r, pub.exponent, pub.modulus)) % pub.modulus;
}

BigUint sign_blinded(const BigUint& blinded, const RsaKeyPair& keypair) {
  return keypair.private_op(blinded, KeyRole::ticket_signing);
}

BigUint unblind(const BigUint& signature, const BlindingFactor& factor, const RsaPublicKey& pub) {
  if (signature < 0 || signature >= pub.modulus) throw Error(ErrorCode::out_of_range, "signature not in [0, N)");
  return (signature * factor.r_inverse) % pub.modulus;
}

std::string_view to_string(SignatureMode mode) {
  return mode == SignatureMode::raw ? "raw" : "hash";
}

SignatureMode signature_mode_from_string(std::string_view text) {
  if (text == "raw") return SignatureMode::raw;
  if (text == "hash" || text == "hash_then_sign") return SignatureMode::hash_then_sign;
  throw Error(ErrorCode::invalid_argument, "unknown signature mode '" + std::string(text) + "'");
}

BigUint message_representative(const BigUint& message, const RsaPublicKey& pub, SignatureMode mode) {
  if (mode == SignatureMode::raw) return message;
  auto digest = sha256(to_bytes(message));
  return from_bytes(digest) % pub.modulus;
}

bool verify_signature(const BigUint& message, const BigUint& signature, const RsaPublicKey& pub,
                      SignatureMode mode) {
  if (signature < 0 || signature >= pub.modulus || message < 0) return false;
  if (mode == SignatureMode::raw && message >= pub.modulus) return false;
  return mod_pow(signature, pub.exponent, pub.modulus) == message_representative(message, pub, mode);
}

namespace {

template <std::size_t N>
std::array<std::uint8_t, N> evp_digest(const EVP_MD* md, ByteView data) {
  std::array<std::uint8_t, N> out{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, md, nullptr) != 1 || len != N) {
    throw Error(ErrorCode::invalid_argument, "digest failed");
  }
  return out;
}

}  // namespace

Md5Digest md5_checksum(ByteView data) { return evp_digest<16>(EVP_md5(), data); }
Sha256Digest sha256(ByteView data) { return evp_digest<32>(EVP_sha256(), data); }

Bytes rsa_encrypt(ByteView message, const RsaPublicKey& pub, RandomSource& rng) {
  const std::size_t k = pub.byte_length();
  if (message.size() + 11 > k) throw Error(ErrorCode::out_of_range, "message too long for RSA modulus");
  Bytes em(k, 0);
  em[1] = 0x02;
  std::size_t ps_len = k - 3 - message.size();
  for (std::size_t i = 0; i < ps_len; ++i) {
    std::uint8_t b;
    do {
      b = static_cast<std::uint8_t>(rng.next_u64());
    } while (b == 0);
    em[2 + i] = b;
  }
  std::copy(message.begin(), message.end(), em.begin() + 3 + static_cast<std::ptrdiff_t>(ps_len));
  return to_bytes_fixed(mod_pow(from_bytes(em), pub.exponent, pub.modulus), k);
}

Bytes rsa_decrypt(ByteView ciphertext, const RsaKeyPair& keypair) {
  const std::size_t k = keypair.public_key().byte_length();
  if (ciphertext.size() != k) throw Error(ErrorCode::decryption_failure, "ciphertext length mismatch");
  BigUint c = from_bytes(ciphertext);
  if (c >= keypair.modulus()) throw Error(ErrorCode::decryption_failure, "ciphertext out of range");
  Bytes em = to_bytes_fixed(keypair.private_op(c, KeyRole::encryption), k);
  if (em[0] != 0x00 || em[1] != 0x02) throw Error(ErrorCode::decryption_failure, "bad padding header");
  auto sep = std::find(em.begin() + 2, em.end(), std::uint8_t{0});
  if (sep == em.end() || sep - em.begin() < 10) throw Error(ErrorCode::decryption_failure, "bad padding string");
  return Bytes(sep + 1, em.end());
}

Rc4::Rc4(ByteView key) {
  if (key.empty() || key.size() > 256) throw Error(ErrorCode::invalid_argument, "RC4 key length");
  for (int i = 0; i < 256; ++i) s_[i] = static_cast<std::uint8_t>(i);
  std::uint8_t j = 0;
  for (int i = 0; i < 256; ++i) {
    j = static_cast<std::uint8_t>(j + s_[i] + key[i % key.size()]);
    std::swap(s_[i], s_[j]);
  }
}

std::uint8_t Rc4::next() {
  i_ = static_cast<std::uint8_t>(i_ + 1);
  j_ = static_cast<std::uint8_t>(j_ + s_[i_]);
  std::swap(s_[i_], s_[j_]);
  return s_[static_cast<std::uint8_t>(s_[i_] + s_[j_])];
}

void Rc4::apply(std::span<std::uint8_t> data) {
  for (auto& b : data) b ^= next();
}

HybridEnvelope hybrid_seal(ByteView plaintext, const RsaPublicKey& recipient, RandomSource& rng,
                           std::size_t max_plaintext) {
  if (plaintext.empty()) throw Error(ErrorCode::invalid_argument, "empty plaintext");
  if (plaintext.size() >= max_plaintext) throw Error(ErrorCode::policy, "plaintext exceeds size policy");
  Bytes key = rng.bytes(kStreamKeyBytes);
  HybridEnvelope env;
  env.cryp.assign(plaintext.begin(), plaintext.end());
  Rc4(key).apply(env.cryp);
  env.evkey = rsa_encrypt(key, recipient, rng);
  return env;
}

Bytes hybrid_open(const HybridEnvelope& envelope, const RsaKeyPair& keypair) {
  Bytes key = rsa_decrypt(envelope.evkey, keypair);
  if (key.size() != kStreamKeyBytes) throw Error(ErrorCode::decryption_failure, "stream key is not 16 bytes");
  Bytes out = envelope.cryp;
  Rc4(key).apply(out);
  return out;
}

namespace {
constexpr std::uint64_t kLcgMultiplier = 0x5DEECE66DULL;
constexpr std::uint64_t kLcgIncrement = 0xBULL;
constexpr std::uint64_t kLcgMask = (1ULL << 48) - 1;
}  // namespace

WeakPrng::WeakPrng(const WeakPrngState& state) {
  auto digest = sha256(state.fingerprint);
  std::uint64_t fp = 0;
  for (int i = 0; i < 8; ++i) fp = fp << 8 | digest[i];
  seed_ = ((static_cast<std::uint64_t>(state.seed_ms) ^ fp) ^ kLcgMultiplier) & kLcgMask;
  for (std::uint64_t i = 0; i < state.counter; ++i) next_u32();
}

std::uint32_t WeakPrng::next_u32() {
  seed_ = (seed_ * kLcgMultiplier + kLcgIncrement) & kLcgMask;
  return static_cast<std::uint32_t>(seed_ >> 16);
}

BigUint weak_opacity_factor(const WeakPrngState& state) {
  WeakPrng prng(state);
  std::string digits = std::to_string(prng.next_u32());
  digits += std::to_string(prng.next_u32());
  return BigUint(digits, 10);
}

std::optional<std::int64_t> link_blinded_ticket(const BigUint& blinded, const BigUint& published_ticket,
                                                const RsaPublicKey& pub, std::int64_t window_lo,
                                                std::int64_t window_hi, ByteView fingerprint,
                                                std::uint64_t counter) {
  if (window_lo > window_hi) return std::nullopt;
  if (window_hi - window_lo >= kMaxLinkWindowMs) {
    throw Error(ErrorCode::policy, "search window exceeds " + std::to_string(kMaxLinkWindowMs) + " ms");
  }
  WeakPrngState state{0, Bytes(fingerprint.begin(), fingerprint.end()), counter};
  for (std::int64_t seed = window_lo; seed <= window_hi; ++seed) {
    state.seed_ms = seed;
    BigUint r = weak_opacity_factor(state) % pub.modulus;
    if (r == 0) continue;
    BigUint candidate = (published_ticket * mod_pow(r, pub.exponent, pub.modulus)) % pub.modulus;
    if (candidate == blinded) return seed;
  }
  return std::nullopt;
}

}  // namespace stork
