#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "stork/crypto.hpp"
#include "stork/wire.hpp"

namespace stork {

enum class RelayMode { legacy, hardened };

std::string_view to_string(RelayMode mode);
RelayMode relay_mode_from_string(std::string_view text);

struct RelayPolicy {
  RelayMode mode = RelayMode::hardened;
  std::uint32_t max_attempts = 5;                 // hardened only
  TimeMs max_delay_past_snd_d = 3'600'000;        // hardened only
  TimeMs reject_time = 86'400'000;
  std::optional<std::size_t> queue_capacity;      // unlimited when empty
  /// In-flight entries with no result after this long count as transport failures.
  TimeMs in_flight_timeout = 30'000;

  static RelayPolicy legacy();
  static RelayPolicy hardened();
};

enum class EntryState { pending, in_flight, delivered, expired, discarded };

std::string_view to_string(EntryState state);

using EntryId = std::uint64_t;

struct RelayQueueEntry {
  EntryId id = 0;
  OnionPackage package;
  TimeMs received_at = 0;
  TimeMs sent_at = 0;
  std::uint32_t attempts = 0;
  EntryState state = EntryState::pending;
};

struct SendAction {
  EntryId entry = 0;
  std::string url;
  SealedPackage package;
};

struct TransportFailure {};

/// Either the challenge the next hop answered with, or a transport failure.
using DeliveryResult = std::variant<std::uint64_t, TransportFailure>;

struct InboundResult {
  std::optional<std::uint64_t> challenge;  // pChal on success
  std::optional<ErrorCode> error;
  std::optional<EntryId> entry;  // set when enqueued
  bool enqueued = false;
  bool probe = false;
};

struct RelayMetrics {
  std::uint64_t inbound_participation = 0;
  std::uint64_t probes_answered = 0;
  std::uint64_t inbound_errors = 0;
  std::uint64_t sends = 0;
  std::uint64_t delivered = 0;
  std::uint64_t discarded = 0;
  std::uint64_t expired = 0;
  std::uint64_t wrong_challenges = 0;
  std::uint64_t transport_failures = 0;
  std::size_t max_queue = 0;
};

/// A mix node. Mutating calls are serialized internally; one logical owner
/// (a timer or the simulator loop) is expected to drive process_queue.
class NodeRelay {
 public:
  NodeRelay(std::string url, RsaKeyPair keypair, RelayPolicy policy);

  const std::string& url() const { return url_; }
  const RsaKeyPair& keypair() const { return keypair_; }
  const RelayPolicy& policy() const { return policy_; }
  NodeInfo info(double weight = 1.0) const;

  InboundResult handle_inbound(const SealedPackage& sealed, TimeMs now);
  /// Endpoint form: a sealedPackage document in, a response document out.
  std::string handle_document(std::string_view sealed_xml, TimeMs now);

  std::vector<SendAction> process_queue(TimeMs now);
  EntryState on_delivery_result(EntryId id, const DeliveryResult& result, TimeMs now);
  std::size_t expire_queue(TimeMs now);

  std::size_t queue_size() const;
  std::vector<RelayQueueEntry> snapshot() const;
  RelayMetrics metrics() const;

 private:
  void finish(std::map<EntryId, RelayQueueEntry>::iterator it, EntryState terminal);
  void handle_failure(std::map<EntryId, RelayQueueEntry>::iterator it, TimeMs now);

  std::string url_;
  RsaKeyPair keypair_;
  RelayPolicy policy_;

  mutable std::mutex mutex_;
  std::map<EntryId, RelayQueueEntry> queue_;
  EntryId next_id_ = 1;
  RelayMetrics metrics_;
};

}  // namespace stork
