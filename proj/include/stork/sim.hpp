#pragma once

#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "stork/client.hpp"
#include "stork/gateway.hpp"
#include "stork/node_relay.hpp"
#include "stork/sp_service.hpp"

namespace stork {

enum class ScheduleMode { mixed, immediate };

std::string_view to_string(ScheduleMode mode);
ScheduleMode schedule_mode_from_string(std::string_view text);

struct SimConfig {
  std::uint64_t seed = 1;
  std::size_t voters = 20;
  std::size_t nodes = 4;
  std::vector<double> node_weights;  // empty: all 1
  int rou_len = 2;
  std::size_t paths = 2;

  TimeMs start = 1'395'820'000'000;
  TimeMs signing_period = 3'600'000;  // start .. endD
  TimeMs frame = 3'600'000;           // endD .. cloD
  TimeMs safety = kDefaultSafetyMs;
  TimeMs tolerance = kDefaultToleranceMs;
  TimeMs reject_time = kDefaultRejectTimeMs;
  /// Hard stop this long after the last cloD; a run still busy then is non-quiescent.
  TimeMs horizon_after_clod = kDefaultRejectTimeMs + 3'600'000;

  RelayMode policy = RelayMode::hardened;
  PaddingMode padding = PaddingMode::none;
  ScheduleMode mode = ScheduleMode::mixed;
  TimeMs immediate_spacing = 60'000;

  TimeMs latency_min = 10;
  TimeMs latency_max = 200;
  double loss = 0.0;
  TimeMs cadence = 30'000;

  std::size_t key_bits = 512;
  std::vector<std::string> options{"A", "B"};
  SignatureMode sig_mode = SignatureMode::raw;
  bool check_commitment = true;

  TimeMs end_d() const { return start + signing_period; }
  TimeMs clo_d() const { return end_d() + frame; }

  void validate() const;
  /// Plain key = value lines; '#' and ';' start comments; [sections] are ignored.
  static SimConfig parse(std::string_view text);
  static SimConfig load(const std::filesystem::path& path);
  std::string to_ini() const;
};

struct SignObservation {
  std::size_t voter = 0;
  TimeMs at = 0;

  friend bool operator==(const SignObservation&, const SignObservation&) = default;
};

struct ArrivalObservation {
  std::string id_ticket;
  TimeMs at = 0;
  BallotVerdict verdict = BallotVerdict::rejected;
  std::string reason;

  friend bool operator==(const ArrivalObservation&, const ArrivalObservation&) = default;
};

struct QueueSample {
  std::string node;
  TimeMs at = 0;
  std::size_t size = 0;

  friend bool operator==(const QueueSample&, const QueueSample&) = default;
};

struct SizeObservation {
  std::size_t voter = 0;
  std::size_t route = 0;
  std::size_t bytes = 0;

  friend bool operator==(const SizeObservation&, const SizeObservation&) = default;
};

/// Simulator-only knowledge, used to score the adversaries.
struct GroundTruth {
  std::size_t voter = 0;
  std::string id_ticket;  // empty when the voter aborted
  std::string option;
  std::string abort_stage;

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

struct ObservationLog {
  std::vector<SignObservation> signs;
  std::vector<ArrivalObservation> arrivals;
  std::vector<QueueSample> queues;
  std::vector<SizeObservation> sizes;
  std::vector<GroundTruth> truth;

  std::string serialize() const;
  static ObservationLog parse(std::string_view text);

  friend bool operator==(const ObservationLog&, const ObservationLog&) = default;
};

struct SimMetrics {
  std::size_t voters = 0;
  std::size_t aborted = 0;
  std::uint64_t injected = 0;  // honest packages handed to the gateway
  std::uint64_t accepted = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t rejected = 0;
  std::uint64_t lost = 0;
  std::map<std::string, std::size_t> max_queue;
  bool non_quiescent = false;
  TimeMs finished_at = 0;

  bool conserved() const { return accepted + duplicates + rejected + lost == injected; }
};

struct SimResult {
  ObservationLog log;
  TallyResult tally;
  std::string audit;  // published audit document
  SimMetrics metrics;
  std::string survey_id;
  std::vector<NodeInfo> nodes;
};

class SimContext;

struct SimHooks {
  /// Descriptor served to one voter; defaults to the honest one.
  std::function<SurveyDescriptor(std::size_t voter, const SurveyDescriptor& honest)> descriptor_for;
  /// Ballot acceptance window the SP uses instead of [endD, cloD].
  std::optional<std::pair<TimeMs, TimeMs>> acceptance_window;
  /// Runs once the stack is built and before the first event.
  std::function<void(SimContext&)> setup;
  /// Runs after every relay tick.
  std::function<void(SimContext&, TimeMs now)> after_tick;
};

/// Handle the hooks use to reach into a running simulation.
class SimContext {
 public:
  virtual ~SimContext() = default;
  virtual TimeMs now() const = 0;
  virtual const SimConfig& config() const = 0;
  virtual ServiceProvider& sp() = 0;
  virtual const SurveyRecord& survey() const = 0;
  virtual NodeRelay& node(std::size_t index) = 0;
  virtual std::size_t node_count() const = 0;
  virtual RandomSource& rng() = 0;
  virtual void at(TimeMs when, std::function<void()> action) = 0;
};

SimResult run_scenario(const SimConfig& config, const SimHooks& hooks = {});

std::string render_report(const SimResult& result);
/// Human-readable summary of a serialized log.
std::string summarize_log(const ObservationLog& log);

// ---------------------------------------------------------------------------
// Adversaries

/// Rank-matches sign-request times against first accepted arrivals and
/// returns the fraction of voters linked to their own ticket.
double timing_link_attack(const ObservationLog& log);

struct ClodSplitReport {
  std::vector<std::size_t> victims;
  std::vector<std::size_t> aborted;  // victims whose client refused
  std::size_t identified = 0;
  double accuracy = 0.0;
  std::uint64_t tallied = 0;
  SimResult run;
};

/// Each victim gets its own window, shifted by (i + 1) * shift. Zero shift
/// serves everyone the honest window.
ClodSplitReport clod_split_scenario(SimConfig config, const std::vector<std::size_t>& victims, TimeMs shift,
                                    bool check_commitment);

struct BombReport {
  RelayMode policy = RelayMode::hardened;
  std::size_t bombs = 0;
  std::string target;
  std::vector<std::pair<TimeMs, std::size_t>> series;  // bomb entries at the target, per tick
  std::size_t at_horizon = 0;
  std::size_t min_after_injection = 0;
  std::optional<TimeMs> first_attempt;
  std::optional<TimeMs> drained_at;
  std::uint64_t upstream_relayed = 0;  // bombs the upstream node handed on
  SimResult run;
};

BombReport challenge_bomb_scenario(SimConfig config, std::size_t bombs, std::size_t target_node);

struct LengthAttackResult {
  double accuracy = 0.0;
  double threshold = 0.0;
  std::size_t observations = 0;
  bool degenerate = false;
};

LengthAttackResult length_profile_attack(const ObservationLog& log, const std::vector<std::string>& options);

}  // namespace stork
