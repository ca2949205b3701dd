#include <gtest/gtest.h>

#include "stork/crypto.hpp"
#include "stork/errors.hpp"

using namespace stork;

namespace {

RsaKeyPair toy(KeyRole role) { return RsaKeyPair::from_primes(61, 53, 17, role); }

}  // namespace

TEST(Bigint, MinimalBytesAndBack) {
  EXPECT_TRUE(to_bytes(BigUint(0)).empty());
  EXPECT_EQ(to_bytes(BigUint(0x0102)), (Bytes{0x01, 0x02}));
  EXPECT_EQ(to_bytes_fixed(BigUint(0x0102), 4), (Bytes{0, 0, 0x01, 0x02}));
  EXPECT_THROW(to_bytes_fixed(BigUint(0x010203), 2), Error);
  EXPECT_EQ(from_bytes(Bytes{0, 0, 1, 0}), BigUint(256));
}

TEST(Bigint, Base64StrictDecode) {
  EXPECT_EQ(base64_encode(to_byte_vector("abc")), "YWJj");
  EXPECT_EQ(to_string(base64_decode("YWJj")), "abc");
  EXPECT_EQ(to_string(base64_decode("YQ==")), "a");
  EXPECT_THROW(base64_decode("YWJ"), Error);
  EXPECT_THROW(base64_decode("YW*j"), Error);
  EXPECT_EQ(from_base64(to_base64(BigUint("123456789012345678901234567890"))),
            BigUint("123456789012345678901234567890"));
}

TEST(Rsa, TextbookKey) {
  auto kp = toy(KeyRole::encryption);
  EXPECT_EQ(kp.modulus(), 3233);
  // inverse of 17 modulo (61-1)(53-1) = 3120
  EXPECT_EQ(kp.private_exponent(), 2753);
  EXPECT_EQ(mod_pow(65, 17, 3233), 2790);
  EXPECT_EQ(kp.private_op(2790, KeyRole::encryption), 65);
}

TEST(Rsa, ExponentMustBeCoprime) { EXPECT_THROW(RsaKeyPair::from_primes(61, 53, 3 * 5, KeyRole::encryption), Error); }

TEST(Rsa, RoleIsCheckedOnPrivateOps) {
  auto enc = toy(KeyRole::encryption);
  EXPECT_THROW(enc.private_op(5, KeyRole::ticket_signing), Error);
  EXPECT_THROW(sign_blinded(5, enc), Error);
  auto sig = toy(KeyRole::ticket_signing);
  EXPECT_NO_THROW(sign_blinded(5, sig));
}

TEST(Rsa, GeneratedKeysHaveExactSize) {
  DeterministicRng rng(7);
  for (std::size_t bits : {512u, 1024u}) {
    auto kp = generate_keypair(bits, rng);
    EXPECT_EQ(kp.bit_length(), bits);
    EXPECT_EQ(kp.public_exponent(), 65537);
    EXPECT_EQ((kp.public_exponent() * kp.private_exponent()) % ((kp.prime_p() - 1) * (kp.prime_q() - 1)), 1);
  }
  EXPECT_THROW(generate_keypair(768, rng), Error);
}

TEST(Blind, ToyVector) {
  auto pub = toy(KeyRole::ticket_signing).public_key();
  auto f = BlindingFactor::from(7, pub);
  EXPECT_EQ(blind(65, f, pub), 2034);
  EXPECT_EQ((f.r * f.r_inverse) % 3233, 1);
}

TEST(Blind, FactorMustBeInvertible) {
  auto pub = toy(KeyRole::ticket_signing).public_key();
  EXPECT_THROW(BlindingFactor::from(61, pub), Error);
  EXPECT_THROW(BlindingFactor::from(0, pub), Error);
  EXPECT_THROW(BlindingFactor::from(3233, pub), Error);
}

TEST(Blind, UnblindedEqualsDirectSignature) {
  DeterministicRng rng(11);
  auto kp = generate_keypair(512, rng, KeyRole::ticket_signing);
  const auto& pub = kp.public_key();
  for (int i = 0; i < 20; ++i) {
    BigUint m = random_below(rng, pub.modulus - 1) + 1;
    auto f = make_blinding_factor(pub, rng);
    auto s = unblind(sign_blinded(blind(m, f, pub), kp), f, pub);
    EXPECT_EQ(s, mod_pow(m, kp.private_exponent(), pub.modulus));
    EXPECT_TRUE(verify_signature(m, s, pub, SignatureMode::raw));
  }
}

TEST(Blind, HashThenSign) {
  DeterministicRng rng(12);
  auto kp = generate_keypair(512, rng, KeyRole::ticket_signing);
  const auto& pub = kp.public_key();
  BigUint m = 123456789;
  auto rep = message_representative(m, pub, SignatureMode::hash_then_sign);
  EXPECT_EQ(rep, from_bytes(sha256(to_bytes(m))) % pub.modulus);
  auto f = make_blinding_factor(pub, rng);
  auto blinded = blind(rep, f, pub);
  auto s_blind = sign_blinded(blinded, kp);
  auto s = unblind(s_blind, f, pub);
  EXPECT_TRUE(verify_signature(m, s, pub, SignatureMode::hash_then_sign));
  EXPECT_FALSE(verify_signature(m, s, pub, SignatureMode::raw));
  EXPECT_FALSE(verify_signature(blinded, s_blind, pub, SignatureMode::hash_then_sign));
  EXPECT_TRUE(verify_signature(blinded, s_blind, pub, SignatureMode::raw));
}

TEST(Digest, KnownValues) {
  EXPECT_EQ(to_hex(md5_checksum({})), "d41d8cd98f00b204e9800998ecf8427e");
  EXPECT_EQ(to_hex(md5_checksum(as_bytes("abc"))), "900150983cd24fb0d6963f7d28e17f72");
  EXPECT_EQ(to_hex(sha256(as_bytes("abc"))), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Rc4, KeystreamVector) {
  Bytes key(16);
  for (int i = 0; i < 16; ++i) key[i] = static_cast<std::uint8_t>(i + 1);
  Rc4 rc4(key);
  Bytes stream(32, 0);
  rc4.apply(stream);
  EXPECT_EQ(to_hex(stream), "9ac7cc9a609d1ef7b2932899cde41b975248c4959014126a6e8a84f11d1a9e1c");
}

TEST(RsaEncryption, RoundTripAndFailures) {
  DeterministicRng rng(13);
  auto kp = generate_keypair(512, rng);
  auto other = generate_keypair(512, rng);
  auto msg = rng.bytes(16);
  auto ct = rsa_encrypt(msg, kp.public_key(), rng);
  EXPECT_EQ(ct.size(), 64u);
  EXPECT_EQ(rsa_decrypt(ct, kp), msg);
  try {
    rsa_decrypt(ct, other);
    FAIL() << "decrypted under the wrong key";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::decryption_failure);
  }
  EXPECT_THROW(rsa_encrypt(Bytes(60), kp.public_key(), rng), Error);
  auto signer = generate_keypair(512, rng, KeyRole::ticket_signing);
  EXPECT_THROW(rsa_decrypt(rsa_encrypt(msg, signer.public_key(), rng), signer), Error);
}

TEST(Hybrid, SealOpen) {
  DeterministicRng rng(14);
  auto kp = generate_keypair(512, rng);
  auto pt = to_byte_vector("<participation/>");
  auto env = hybrid_seal(pt, kp.public_key(), rng);
  EXPECT_EQ(env.cryp.size(), pt.size());
  EXPECT_NE(env.cryp, pt);
  EXPECT_EQ(hybrid_open(env, kp), pt);
  EXPECT_THROW(hybrid_seal({}, kp.public_key(), rng), Error);
  EXPECT_THROW(hybrid_seal(Bytes(100), kp.public_key(), rng, 100), Error);
  auto bad = env;
  bad.evkey[5] ^= 0x40;
  EXPECT_THROW(hybrid_open(bad, kp), Error);
}

TEST(WeakPrng, MatchesIndependentLcg) {
  WeakPrngState s{1395820534000, to_byte_vector("browser-fingerprint"), 0};
  EXPECT_EQ(weak_opacity_factor(s), BigUint("13146818551867543748"));
  EXPECT_EQ(weak_opacity_factor({0, {}, 0}), BigUint("3498372047852753485"));
  s.counter = 2;
  EXPECT_EQ(weak_opacity_factor(s), BigUint("504327829857479060"));
}

TEST(WeakPrng, LinkerRecoversSeed) {
  DeterministicRng rng(15);
  auto kp = generate_keypair(512, rng, KeyRole::ticket_signing);
  const auto& pub = kp.public_key();
  auto fp = to_byte_vector("fp");
  BigUint m = random_below(rng, pub.modulus - 1) + 1;
  std::int64_t seed = 1'400'000'000'123;
  auto f = BlindingFactor::from(weak_opacity_factor({seed, fp, 0}), pub);
  auto blinded = blind(m, f, pub);
  EXPECT_EQ(link_blinded_ticket(blinded, m, pub, seed - 50, seed + 50, fp), seed);
  EXPECT_EQ(link_blinded_ticket(blinded, m, pub, seed + 1, seed + 50, fp), std::nullopt);
  EXPECT_EQ(link_blinded_ticket(blinded, m, pub, 10, 5, fp), std::nullopt);
  EXPECT_THROW(link_blinded_ticket(blinded, m, pub, 0, kMaxLinkWindowMs, fp), Error);
}

TEST(Random, UniformStaysInRange) {
  DeterministicRng rng(16);
  for (int i = 0; i < 1000; ++i) {
    auto v = rng.uniform(3, 9);
    EXPECT_GE(v, 3u);
    EXPECT_LE(v, 9u);
    auto s = rng.uniform_signed(-5, 5);
    EXPECT_GE(s, -5);
    EXPECT_LE(s, 5);
  }
  DeterministicRng a(1), b(1);
  EXPECT_EQ(a.next_u64(), b.next_u64());
  EXPECT_NE(a.fork("x").next_u64(), b.fork("y").next_u64());
}
