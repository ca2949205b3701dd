#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "stork/crypto.hpp"
#include "stork/onion.hpp"
#include "stork/random.hpp"
#include "stork/wire.hpp"

namespace stork {

/// Everything the voter sends goes through here: form posts to the SP and
/// plain fetches (the node directory).
class ClientTransport {
 public:
  virtual ~ClientTransport() = default;
  virtual std::string post(const std::string& url, const FormRequest& form) = 0;
  virtual std::string get(const std::string& url) = 0;
};

class Clock {
 public:
  virtual ~Clock() = default;
  virtual TimeMs now() = 0;
  virtual void sleep_until(TimeMs t) = 0;
};

class SystemClock final : public Clock {
 public:
  TimeMs now() override;
  void sleep_until(TimeMs t) override;
};

/// Jumps instead of sleeping.
class ManualClock final : public Clock {
 public:
  explicit ManualClock(TimeMs start) : now_(start) {}
  TimeMs now() override { return now_; }
  void sleep_until(TimeMs t) override { now_ = std::max(now_, t); }
  void advance(TimeMs dt) { now_ += dt; }

 private:
  TimeMs now_;
};

enum class Stage { source, commitment, auth, time_sync, directory, routes, probes, ticket, sign, verify, onion, submit };

std::string_view to_string(Stage stage);

class StageError : public Error {
 public:
  StageError(Stage stage, ErrorCode code, const std::string& message);
  Stage stage() const { return stage_; }

 private:
  Stage stage_;
};

enum class SourcePolicy { strict, permissive };

struct ClientOptions {
  std::string token;
  std::string directory_url;
  std::string descriptor_url;  // where the descriptor came from, if known
  SourcePolicy source_policy = SourcePolicy::strict;
  bool check_commitment = true;
  std::optional<Sha256Digest> published_commitment;
  PaddingPolicy padding;
  TimeMs safety = kDefaultSafetyMs;
  TimeMs tolerance = kDefaultToleranceMs;
  TimeMs reject_time = kDefaultRejectTimeMs;
  /// Immediate mode: every hop is due at sign time + this delay.
  std::optional<TimeMs> immediate_delay;
  /// Weak blinding: millisecond-seeded factor, with this browser fingerprint.
  std::optional<Bytes> weak_fingerprint;
  /// Test hook: stop with aborted right after this stage.
  std::optional<Stage> abort_after;
};

Ticket generate_ticket(const SurveyDescriptor& survey, RandomSource& rng);

bool verify_window_commitment(const SurveyDescriptor& survey, const Sha256Digest& published);

/// K routes, first hops pairwise distinct while there are enough nodes.
std::vector<std::vector<NodeInfo>> select_routes(std::span<const NodeInfo> nodes, std::size_t rou_len, std::size_t k,
                                                 RandomSource& rng);

enum class PlanState { init, probed, signed_, submitted };

std::string_view to_string(PlanState state);

struct ParticipationPlan {
  SurveyDescriptor survey;
  std::vector<Route> routes;
  Ticket ticket;
  BlindingFactor blinding;
  BigUint opct;
  std::optional<BigUint> signature;
  PlanState state = PlanState::init;
  TimeMs clock_offset = 0;  // server minus local
  std::optional<std::int64_t> weak_seed;
  bool resumed = false;
};

/// Sends one bundle of probes (one per route with hops) through the SP proxy
/// and drops routes whose first hop did not answer. Throws when none did.
void probe_first_hops(ParticipationPlan& plan, ClientTransport& transport, const std::string& token,
                      RandomSource& rng);

struct PreparedBundle {
  std::size_t route = 0;
  TimeMs submit_at = 0;
  Bundle bundle;
  std::uint64_t expected_challenge = 0;
};

struct RouteStatus {
  std::size_t route = 0;
  std::string first_hop;
  TimeMs submitted_at = 0;
  bool delivered = false;
  std::string error;
};

struct SubmissionReport {
  std::string survey_id;
  std::string id_ticket;
  bool resumed = false;
  std::vector<RouteStatus> routes;

  std::size_t delivered() const;
};

/// Persisted between runs so a crash after the sign request can be resumed
/// with the same blinded ticket. An empty path disables persistence.
struct PersistedState {
  std::string survey_id;
  PlanState state = PlanState::init;
  Ticket ticket;
  BigUint r;
  std::optional<BigUint> signature;
  std::optional<std::int64_t> weak_seed;
};

void save_state(const std::filesystem::path& path, const PersistedState& state);
std::optional<PersistedState> load_state(const std::filesystem::path& path);

class Client {
 public:
  Client(ClientTransport& transport, Clock& clock, RandomSource& rng, ClientOptions options);

  /// Every stage up to and including onion construction.
  ParticipationPlan prepare(const SurveyDescriptor& survey, ByteView answer, std::size_t k,
                            const std::filesystem::path& state_path, std::vector<PreparedBundle>& bundles);
  RouteStatus submit(const PreparedBundle& prepared, const ParticipationPlan& plan);
  /// Marks the persisted state as submitted.
  void finish(ParticipationPlan& plan, const std::filesystem::path& state_path);

  SubmissionReport participate(const SurveyDescriptor& survey, ByteView answer, std::size_t k,
                               const std::filesystem::path& state_path);

  const ClientOptions& options() const { return options_; }

 private:
  std::string sp_call(Stage stage, const SurveyDescriptor& survey, FormRequest form);
  void checkpoint(Stage stage) const;

  ClientTransport& transport_;
  Clock& clock_;
  RandomSource& rng_;
  ClientOptions options_;
};

}  // namespace stork
