#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "stork/crypto.hpp"
#include "stork/random.hpp"
#include "stork/wire.hpp"

namespace stork {

inline constexpr TimeMs kDefaultSafetyMs = 60'000;
inline constexpr TimeMs kDefaultToleranceMs = 120'000;
inline constexpr TimeMs kDefaultRejectTimeMs = 86'400'000;

struct BallotBoxInfo {
  std::string url;
  RsaPublicKey key;
};

struct Route {
  std::vector<NodeInfo> hops;
  BallotBoxInfo ballot_box;
  /// hops.size() + 1 entries: hand-off time into each hop, then ballot-box delivery.
  std::vector<TimeMs> schedule;
  /// hops.size() + 1 entries: challenge answered by each hop, then by the ballot box.
  std::vector<std::uint64_t> challenges;

  void validate() const;
};

struct PaddingPolicy {
  PaddingMode mode = PaddingMode::none;
  std::size_t max_random_bytes = 256;
};

/// Length header prepended by the random and equalize padding modes.
inline constexpr std::size_t kPadHeaderBytes = 4;

/// Weighted sampling without replacement; weights renormalise after each draw.
std::vector<NodeInfo> pick_route(std::span<const NodeInfo> nodes, std::size_t rou_len, RandomSource& rng);

/// Picks the ballot-box delivery uniformly in [endD + safety, cloD - tolerance]
/// and fills earlier hand-offs backwards (see backfill_schedule).
std::vector<TimeMs> schedule_deliveries(TimeMs now, TimeMs end_d, TimeMs clo_d, TimeMs safety, TimeMs tolerance,
                                        std::size_t hop_count, RandomSource& rng);

/// Given the final delivery time, draws entry k (from last to first) uniformly
/// in [T(k+1) - (T(k+1) - now)/(k+1), T(k+1)]. Returns hop_count + 1 entries.
std::vector<TimeMs> backfill_schedule(TimeMs now, TimeMs final_delivery, std::size_t hop_count, RandomSource& rng);

std::vector<std::uint64_t> make_challenges(std::size_t count, RandomSource& rng);

/// Relay metadata of one layer, before encryption.
struct LayerSpec {
  std::string url;
  std::uint64_t chal = 0;
  std::uint64_t p_chal = 0;
  TimeMs snd_d = 0;
  TimeMs clo_d = 0;
  TimeMs rej_d = 0;
};

/// Layer specs for an honest route.
std::vector<LayerSpec> layer_specs(const Route& route, TimeMs clo_d, TimeMs reject_time);

/// Wraps `innermost` once per hop, last hop first, and returns the outer
/// sealed package addressed to hops[0] (or the innermost envelope addressed
/// to `ballot_box_url` when there are no hops).
SealedPackage seal_layers(const HybridEnvelope& innermost, std::span<const NodeInfo> hops,
                          std::span<const LayerSpec> specs, const std::string& ballot_box_url, RandomSource& rng);

/// `signature` is the unblinded ticket signature; `padded_form` is already
/// padded with `padding`.
SealedPackage build_onion(const Ticket& ticket, const BigUint& signature, ByteView padded_form, PaddingMode padding,
                          const Route& route, const SurveyDescriptor& survey, TimeMs reject_time, RandomSource& rng);

/// Opens one layer. Throws decryption_failure for the wrong key and
/// integrity for anything that decrypts but does not check out.
OnionPackage peel_layer(const SealedPackage& sealed, const RsaKeyPair& keypair);

struct ChallengeProbe {
  SealedPackage package;
  std::uint64_t expected = 0;
};

ChallengeProbe build_challenge_probe(const NodeInfo& first_hop, RandomSource& rng);

Bytes pad_payload(ByteView payload, const PaddingPolicy& policy, std::span<const std::size_t> option_lengths,
                  RandomSource& rng);
Bytes unpad_payload(ByteView padded, PaddingMode mode);

}  // namespace stork
