#include "stork/node_relay.hpp"

#include "stork/onion.hpp"

namespace stork {

std::string_view to_string(RelayMode mode) { return mode == RelayMode::legacy ? "legacy" : "hardened"; }

RelayMode relay_mode_from_string(std::string_view text) {
  if (text == "legacy") return RelayMode::legacy;
  if (text == "hardened") return RelayMode::hardened;
  throw Error(ErrorCode::invalid_argument, "unknown relay policy '" + std::string(text) + "'");
}

RelayPolicy RelayPolicy::legacy() {
  RelayPolicy p;
  p.mode = RelayMode::legacy;
  return p;
}

RelayPolicy RelayPolicy::hardened() { return RelayPolicy{}; }

std::string_view to_string(EntryState state) {
  switch (state) {
    case EntryState::pending: return "pending";
    case EntryState::in_flight: return "in_flight";
    case EntryState::delivered: return "delivered";
    case EntryState::expired: return "expired";
    case EntryState::discarded: return "discarded";
  }
  return "unknown";
}

NodeRelay::NodeRelay(std::string url, RsaKeyPair keypair, RelayPolicy policy)
    : url_(std::move(url)), keypair_(std::move(keypair)), policy_(policy) {
  if (keypair_.role() != KeyRole::encryption) throw Error(ErrorCode::policy, "node key must be an encryption key");
}

NodeInfo NodeRelay::info(double weight) const { return {url_, keypair_.public_key(), weight}; }

InboundResult NodeRelay::handle_inbound(const SealedPackage& sealed, TimeMs now) {
  InboundResult result;
  OnionPackage layer;
  try {
    layer = peel_layer(sealed, keypair_);
  } catch (const Error& e) {
    std::lock_guard lock(mutex_);
    ++metrics_.inbound_errors;
    result.error = e.code();
    return result;
  }
  std::lock_guard lock(mutex_);
  result.challenge = layer.p_chal;
  if (layer.is_probe()) {
    ++metrics_.probes_answered;
    result.probe = true;
    return result;
  }
  if (policy_.queue_capacity && queue_.size() >= *policy_.queue_capacity) {
    ++metrics_.inbound_errors;
    result.challenge.reset();
    result.error = ErrorCode::policy;
    return result;
  }
  EntryId id = next_id_++;
  queue_.emplace(id, RelayQueueEntry{id, std::move(layer), now, 0, 0, EntryState::pending});
  ++metrics_.inbound_participation;
  metrics_.max_queue = std::max(metrics_.max_queue, queue_.size());
  result.entry = id;
  result.enqueued = true;
  return result;
}

std::string NodeRelay::handle_document(std::string_view sealed_xml, TimeMs now) {
  SealedPackage sealed;
  try {
    sealed = decode_sealed_package(sealed_xml);
  } catch (const Error& e) {
    std::lock_guard lock(mutex_);
    ++metrics_.inbound_errors;
    return response_error(e.code(), e.what());
  }
  auto result = handle_inbound(sealed, now);
  if (result.challenge) return response_challenge(*result.challenge);
  return response_error(*result.error, to_string(*result.error));
}

std::vector<SendAction> NodeRelay::process_queue(TimeMs now) {
  std::lock_guard lock(mutex_);
  // In-flight entries that never got an answer count as transport failures.
  for (auto it = queue_.begin(); it != queue_.end();) {
    auto next = std::next(it);
    if (it->second.state == EntryState::in_flight && now - it->second.sent_at >= policy_.in_flight_timeout) {
      ++metrics_.transport_failures;
      handle_failure(it, now);
    }
    it = next;
  }
  std::vector<SendAction> actions;
  for (auto& [id, entry] : queue_) {
    if (entry.state != EntryState::pending || entry.package.snd_d > now) continue;
    entry.state = EntryState::in_flight;
    entry.sent_at = now;
    ++entry.attempts;
    ++metrics_.sends;
    SealedPackage out;
    out.id = 0;
    out.payload = entry.package.cryp;
    out.key = entry.package.evkey;
    out.recipient = entry.package.url;
    actions.push_back(SendAction{id, entry.package.url, std::move(out)});
  }
  return actions;
}

void NodeRelay::finish(std::map<EntryId, RelayQueueEntry>::iterator it, EntryState terminal) {
  switch (terminal) {
    case EntryState::delivered: ++metrics_.delivered; break;
    case EntryState::discarded: ++metrics_.discarded; break;
    case EntryState::expired: ++metrics_.expired; break;
    default: break;
  }
  queue_.erase(it);
}

void NodeRelay::handle_failure(std::map<EntryId, RelayQueueEntry>::iterator it, TimeMs now) {
  auto& entry = it->second;
  if (policy_.mode == RelayMode::hardened &&
      (entry.attempts >= policy_.max_attempts || now >= entry.package.snd_d + policy_.max_delay_past_snd_d)) {
    finish(it, EntryState::discarded);
    return;
  }
  entry.state = EntryState::pending;
}

EntryState NodeRelay::on_delivery_result(EntryId id, const DeliveryResult& result, TimeMs now) {
  std::lock_guard lock(mutex_);
  auto it = queue_.find(id);
  if (it == queue_.end()) throw Error(ErrorCode::unknown_entry, "entry " + std::to_string(id));
  if (it->second.state != EntryState::in_flight) {
    throw Error(ErrorCode::invariant, "entry " + std::to_string(id) + " is not in flight");
  }
  if (const auto* challenge = std::get_if<std::uint64_t>(&result)) {
    if (*challenge == it->second.package.chal) {
      finish(it, EntryState::delivered);
      return EntryState::delivered;
    }
    ++metrics_.wrong_challenges;
    if (policy_.mode == RelayMode::hardened) {
      finish(it, EntryState::discarded);
      return EntryState::discarded;
    }
    it->second.state = EntryState::pending;
    return EntryState::pending;
  }
  ++metrics_.transport_failures;
  handle_failure(it, now);
  auto again = queue_.find(id);
  return again == queue_.end() ? EntryState::discarded : again->second.state;
}

std::size_t NodeRelay::expire_queue(TimeMs now) {
  std::lock_guard lock(mutex_);
  std::size_t removed = 0;
  for (auto it = queue_.begin(); it != queue_.end();) {
    auto next = std::next(it);
    const auto& pkg = it->second.package;
    bool past_reject = now > pkg.clo_d + policy_.reject_time;
    bool past_delay = policy_.mode == RelayMode::hardened && it->second.state == EntryState::pending &&
                      now > pkg.snd_d + policy_.max_delay_past_snd_d;
    if (past_reject || past_delay) {
      finish(it, EntryState::expired);
      ++removed;
    }
    it = next;
  }
  return removed;
}

std::size_t NodeRelay::queue_size() const {
  std::lock_guard lock(mutex_);
  return queue_.size();
}

std::vector<RelayQueueEntry> NodeRelay::snapshot() const {
  std::lock_guard lock(mutex_);
  std::vector<RelayQueueEntry> out;
  out.reserve(queue_.size());
  for (const auto& [id, e] : queue_) out.push_back(e);
  return out;
}

RelayMetrics NodeRelay::metrics() const {
  std::lock_guard lock(mutex_);
  return metrics_;
}

}  // namespace stork
