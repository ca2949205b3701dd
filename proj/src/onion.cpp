#include "stork/onion.hpp"

#include <algorithm>
#include <numeric>

namespace stork {

void Route::validate() const {
  if (schedule.size() != hops.size() + 1 || challenges.size() != hops.size() + 1) {
    throw Error(ErrorCode::invariant, "route schedule/challenges must have hops + 1 entries");
  }
  if (!std::is_sorted(schedule.begin(), schedule.end())) throw Error(ErrorCode::invariant, "schedule decreases");
}

std::vector<NodeInfo> pick_route(std::span<const NodeInfo> nodes, std::size_t rou_len, RandomSource& rng) {
  if (rou_len > nodes.size()) {
    throw Error(ErrorCode::insufficient_nodes,
                "route length " + std::to_string(rou_len) + " with " + std::to_string(nodes.size()) + " nodes");
  }
  std::vector<NodeInfo> pool(nodes.begin(), nodes.end());
  std::vector<NodeInfo> route;
  route.reserve(rou_len);
  while (route.size() < rou_len) {
    double total = 0;
    for (const auto& n : pool) total += n.weight;
    double target = rng.uniform_real() * total;
    std::size_t pick = pool.size() - 1;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      target -= pool[i].weight;
      if (target < 0) {
        pick = i;
        break;
      }
    }
    route.push_back(pool[pick]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return route;
}

std::vector<TimeMs> backfill_schedule(TimeMs now, TimeMs final_delivery, std::size_t hop_count, RandomSource& rng) {
  if (final_delivery < now) throw Error(ErrorCode::empty_frame, "final delivery precedes now");
  std::vector<TimeMs> out(hop_count + 1);
  out[hop_count] = final_delivery;
  for (std::size_t k = hop_count; k-- > 0;) {
    TimeMs next = out[k + 1];
    TimeMs width = (next - now) / static_cast<TimeMs>(k + 1);
    out[k] = rng.uniform_signed(next - width, next);
  }
  return out;
}

std::vector<TimeMs> schedule_deliveries(TimeMs now, TimeMs end_d, TimeMs clo_d, TimeMs safety, TimeMs tolerance,
                                        std::size_t hop_count, RandomSource& rng) {
  TimeMs lo = end_d + safety;
  TimeMs hi = clo_d - tolerance;
  if (lo > hi) throw Error(ErrorCode::empty_frame, "endD + safety > cloD - tolerance");
  if (now >= end_d) throw Error(ErrorCode::window_closed, "scheduling after endD");
  return backfill_schedule(now, rng.uniform_signed(lo, hi), hop_count, rng);
}

std::vector<std::uint64_t> make_challenges(std::size_t count, RandomSource& rng) {
  std::vector<std::uint64_t> out(count);
  for (auto& c : out) c = rng.next_u64();
  return out;
}

std::vector<LayerSpec> layer_specs(const Route& route, TimeMs clo_d, TimeMs reject_time) {
  route.validate();
  const std::size_t n = route.hops.size();
  std::vector<LayerSpec> specs(n);
  for (std::size_t k = 0; k < n; ++k) {
    specs[k].url = k + 1 < n ? route.hops[k + 1].url : route.ballot_box.url;
    specs[k].chal = route.challenges[k + 1];
    specs[k].p_chal = route.challenges[k];
    specs[k].snd_d = route.schedule[k + 1];
    specs[k].clo_d = clo_d;
    specs[k].rej_d = clo_d + reject_time;
  }
  return specs;
}

SealedPackage seal_layers(const HybridEnvelope& innermost, std::span<const NodeInfo> hops,
                          std::span<const LayerSpec> specs, const std::string& ballot_box_url, RandomSource& rng) {
  if (hops.size() != specs.size()) throw Error(ErrorCode::invariant, "one layer spec per hop required");
  HybridEnvelope current = innermost;
  for (std::size_t k = hops.size(); k-- > 0;) {
    OnionPackage layer;
    layer.cryp = std::move(current.cryp);
    layer.evkey = std::move(current.evkey);
    layer.url = specs[k].url;
    layer.chal = specs[k].chal;
    layer.p_chal = specs[k].p_chal;
    layer.snd_d = specs[k].snd_d;
    layer.clo_d = specs[k].clo_d;
    layer.rej_d = specs[k].rej_d;
    layer.update_checksum();
    current = hybrid_seal(as_bytes(encode(layer)), hops[k].key, rng);
  }
  SealedPackage out;
  out.payload = std::move(current.cryp);
  out.key = std::move(current.evkey);
  out.recipient = hops.empty() ? ballot_box_url : hops.front().url;
  return out;
}

SealedPackage build_onion(const Ticket& ticket, const BigUint& signature, ByteView padded_form, PaddingMode padding,
                          const Route& route, const SurveyDescriptor& survey, TimeMs reject_time, RandomSource& rng) {
  route.validate();
  TimeMs clo_d = survey.effective_clo_d();
  if (route.schedule.back() > clo_d) throw Error(ErrorCode::invariant, "final delivery after cloD");
  Participation inner;
  inner.p_chal = route.challenges.back();
  inner.ticket = ticket;
  inner.signature = to_bytes_fixed(signature, survey.signing_key().byte_length());
  inner.padding = padding;
  inner.form.assign(padded_form.begin(), padded_form.end());
  auto envelope = hybrid_seal(as_bytes(encode(inner)), route.ballot_box.key, rng);
  auto specs = layer_specs(route, clo_d, reject_time);
  return seal_layers(envelope, route.hops, specs, route.ballot_box.url, rng);
}

OnionPackage peel_layer(const SealedPackage& sealed, const RsaKeyPair& keypair) {
  Bytes plain = hybrid_open(sealed.envelope(), keypair);
  try {
    return decode_onion_package(to_string(plain));
  } catch (const Error& e) {
    // The stream key decrypted correctly, so a bad layer means the payload was altered.
    throw Error(ErrorCode::integrity, e.what());
  }
}

ChallengeProbe build_challenge_probe(const NodeInfo& first_hop, RandomSource& rng) {
  OnionPackage probe;
  probe.p_chal = rng.next_u64();
  probe.update_checksum();
  auto env = hybrid_seal(as_bytes(encode(probe)), first_hop.key, rng);
  return {SealedPackage{0, std::move(env.cryp), std::move(env.evkey), first_hop.url}, probe.p_chal};
}

namespace {

Bytes with_header(ByteView payload, std::size_t total, RandomSource& rng) {
  Bytes out;
  out.reserve(total);
  auto n = static_cast<std::uint32_t>(payload.size());
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(n >> shift));
  out.insert(out.end(), payload.begin(), payload.end());
  Bytes pad = rng.bytes(total - out.size());
  out.insert(out.end(), pad.begin(), pad.end());
  return out;
}

}  // namespace

Bytes pad_payload(ByteView payload, const PaddingPolicy& policy, std::span<const std::size_t> option_lengths,
                  RandomSource& rng) {
  switch (policy.mode) {
    case PaddingMode::none:
      return Bytes(payload.begin(), payload.end());
    case PaddingMode::random: {
      std::size_t extra = rng.uniform(0, policy.max_random_bytes);
      return with_header(payload, kPadHeaderBytes + payload.size() + extra, rng);
    }
    case PaddingMode::equalize: {
      std::size_t target = option_lengths.empty() ? 0 : *std::max_element(option_lengths.begin(), option_lengths.end());
      if (payload.size() > target) {
        throw Error(ErrorCode::invalid_argument, "payload longer than the longest option");
      }
      return with_header(payload, kPadHeaderBytes + target, rng);
    }
  }
  throw Error(ErrorCode::invalid_argument, "padding mode");
}

Bytes unpad_payload(ByteView padded, PaddingMode mode) {
  if (mode == PaddingMode::none) return Bytes(padded.begin(), padded.end());
  if (padded.size() < kPadHeaderBytes) throw Error(ErrorCode::malformed, "padded payload shorter than header");
  std::uint32_t n = 0;
  for (std::size_t i = 0; i < kPadHeaderBytes; ++i) n = n << 8 | padded[i];
  if (n > padded.size() - kPadHeaderBytes) throw Error(ErrorCode::malformed, "pad header length out of range");
  auto begin = padded.begin() + static_cast<std::ptrdiff_t>(kPadHeaderBytes);
  return Bytes(begin, begin + n);
}

}  // namespace stork
