#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "stork/crypto.hpp"
#include "stork/gateway.hpp"
#include "stork/random.hpp"
#include "stork/wire.hpp"

namespace stork {

/// SHA-256 over length-prefixed survey id, endD, cloD and the signing modulus.
Sha256Digest window_commitment(std::string_view survey_id, TimeMs end_d, TimeMs clo_d, const BigUint& modulus);
Sha256Digest window_commitment(const SurveyDescriptor& survey);

enum class SurveyState { open, signing_closed, tallying, closed };

std::string_view to_string(SurveyState state);

struct SurveyParams {
  std::string name = "survey";
  TimeMs end_d = 0;
  TimeMs clo_d = 0;
  int rou_len = 3;
  std::vector<std::string> options;
  std::size_t key_bits = kDefaultKeyBits;
  SignatureMode sig_mode = SignatureMode::raw;
};

struct SurveyRecord {
  std::string survey_id;
  RsaKeyPair signing;
  RsaKeyPair ballot;
  SurveyDescriptor descriptor;
  Sha256Digest commitment{};
  SurveyState state = SurveyState::open;
};

class Authorizer {
 public:
  virtual ~Authorizer() = default;
  virtual bool authorize(const std::string& token, const std::string& survey_id, bool mark) = 0;
};

/// The demo service: everyone is allowed.
class DemoAuthorizer final : public Authorizer {
 public:
  bool authorize(const std::string&, const std::string&, bool) override { return true; }
};

class RosterAuthorizer final : public Authorizer {
 public:
  explicit RosterAuthorizer(std::set<std::string> roster) : roster_(std::move(roster)) {}

  bool authorize(const std::string& token, const std::string& survey_id, bool mark) override;
  bool participated(const std::string& token, const std::string& survey_id) const;

 private:
  mutable std::mutex mutex_;
  std::set<std::string> roster_;
  std::set<std::pair<std::string, std::string>> marked_;
};

enum class BallotVerdict { accepted, duplicate, rejected };
enum class BallotRejection { bad_decryption, bad_signature, wrong_survey, outside_window, malformed };

std::string_view to_string(BallotVerdict verdict);
std::string_view to_string(BallotRejection reason);

struct BallotOutcome {
  BallotVerdict verdict = BallotVerdict::rejected;
  std::optional<BallotRejection> reason;
  /// pChal of any envelope that decrypted and parsed.
  std::optional<std::uint64_t> challenge;
  std::string id_ticket;
  std::string survey_id;
};

struct BallotEntry {
  Ticket ticket;
  Bytes payload;  // unpadded form
  TimeMs arrival = 0;
};

struct TallyResult {
  std::string survey_id;
  std::vector<BallotEntry> entries;  // ordered by idTicket
  std::map<std::string, std::uint64_t> counts;
  std::uint64_t duplicates = 0;
  std::map<std::string, std::uint64_t> rejected;
};

struct SignRequest {
  std::string token;
  std::string survey_id;
  TimeMs at = 0;
};

class ServiceProvider {
 public:
  ServiceProvider(std::string url, RsaKeyPair entity_key, std::string entity_id, std::shared_ptr<Authorizer> auth,
                  Gateway* gateway, RandomSource& rng);

  const std::string& url() const { return url_; }
  const std::string& entity_id() const { return entity_id_; }
  RsaPublicKey entity_public_key() const { return entity_key_.public_key(); }
  void set_gateway(Gateway* gateway) { gateway_ = gateway; }

  const SurveyRecord& create_survey(const SurveyParams& params);
  /// Takes over a survey created elsewhere; the keys must match the descriptor.
  const SurveyRecord& import_survey(const SurveyDescriptor& descriptor, RsaKeyPair signing, RsaKeyPair ballot);
  const SurveyRecord& survey(const std::string& survey_id) const;
  std::vector<std::string> survey_ids() const;
  SurveyState state(const std::string& survey_id, TimeMs now);
  Sha256Digest commitment(const std::string& survey_id) const;

  bool authorize(const std::string& token, const std::string& survey_id, bool mark);
  std::string server_time(TimeMs now) const { return response_server_time(now); }
  BigUint blind_sign_ticket(const std::string& token, const std::string& survey_id, const BigUint& opct, TimeMs now);
  IngestResult proxy_bundle(const std::string& token, const std::string& survey_id, Bundle bundle, TimeMs now);

  /// The ballot box. Surveys are found by the recipient url.
  BallotOutcome receive_ballot(const SealedPackage& sealed, TimeMs now);
  /// Widens (or moves) the arrival window and stops checking the ticket's
  /// own window. Honest providers never call this.
  void override_acceptance_window(const std::string& survey_id, TimeMs lo, TimeMs hi);

  TallyResult tally(const std::string& survey_id, TimeMs now);
  std::string tally_and_publish(const std::string& survey_id, TimeMs now);

  std::string handle_request(const FormRequest& form, TimeMs now);

  std::vector<SignRequest> sign_log() const;
  std::uint64_t refusals() const;

 private:
  struct Ballots {
    std::map<std::string, BallotEntry> accepted;
    std::uint64_t duplicates = 0;
    std::map<std::string, std::uint64_t> rejected;
  };
  struct Issued {
    BigUint opct;
    BigUint signature;
  };
  struct Survey {
    SurveyRecord record;
    Ballots box;
    std::map<std::string, Issued> registry;  // by voter token
    std::optional<std::pair<TimeMs, TimeMs>> window_override;
  };

  Survey& find(const std::string& survey_id);
  const Survey& find(const std::string& survey_id) const;
  void advance(Survey& s, TimeMs now);
  BallotOutcome reject(Survey* s, BallotOutcome out, BallotRejection reason);
  TallyResult tally_locked(Survey& s, TimeMs now);

  std::string url_;
  RsaKeyPair entity_key_;
  std::string entity_id_;
  std::shared_ptr<Authorizer> auth_;
  Gateway* gateway_;
  RandomSource& rng_;

  mutable std::mutex mutex_;
  std::map<std::string, Survey> surveys_;
  std::map<std::string, std::string> by_ballot_url_;
  std::uint64_t next_survey_ = 1001;
  std::vector<SignRequest> sign_log_;
  std::uint64_t refusals_ = 0;
  std::uint64_t unknown_ballots_ = 0;
};

}  // namespace stork
