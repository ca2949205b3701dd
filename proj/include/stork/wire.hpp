#pragma once

// Data model and XML encoding for everything that crosses a process
// boundary: tickets, onion layers, sealed packages, bundles, survey
// descriptors, node lists and the SP form/response exchanges.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "stork/bigint.hpp"
#include "stork/crypto.hpp"
#include "stork/errors.hpp"

namespace stork {

/// Integer milliseconds since the Unix epoch, UTC.
using TimeMs = std::int64_t;

inline constexpr std::size_t kTicketIdBytes = 21;

struct Ticket {
  std::string id_ticket;  // base64 of 21 random bytes
  std::string id_survey;  // decimal
  TimeMs end_time = 0;
  TimeMs close_time = 0;

  void validate() const;

  friend bool operator==(const Ticket&, const Ticket&) = default;
};

/// Integer the SP signs for a ticket: 0x01 || idTicket || idSurvey(u64) ||
/// endTime(i64) || closeTime(i64), all big-endian.
BigUint ticket_message(const Ticket& ticket);

enum class PaddingMode { none, random, equalize };

std::string_view to_string(PaddingMode mode);
PaddingMode padding_mode_from_string(std::string_view text);

/// One onion layer as seen by the node that peels it.
struct OnionPackage {
  Bytes cryp;   // inner envelope payload
  Bytes evkey;  // inner envelope stream key (RSA-wrapped for the next hop)
  Md5Digest chk{};
  std::string url;
  std::uint64_t chal = 0;    // challenge expected back from `url`
  std::uint64_t p_chal = 0;  // challenge owed to the previous hop
  TimeMs snd_d = 0;
  TimeMs clo_d = 0;
  TimeMs rej_d = 0;

  /// MD5 over the length-prefixed serialization of every other field.
  Md5Digest compute_checksum() const;
  void update_checksum() { chk = compute_checksum(); }
  /// Challenge probes carry no relay data.
  bool is_probe() const { return cryp.empty(); }
  void validate() const;

  friend bool operator==(const OnionPackage&, const OnionPackage&) = default;
};

struct SealedPackage {
  std::uint64_t id = 0;
  Bytes payload;  // cryp of the enclosed layer
  Bytes key;      // evkey of the enclosed layer
  std::string recipient;

  HybridEnvelope envelope() const { return {key, payload}; }
  void validate() const;

  friend bool operator==(const SealedPackage&, const SealedPackage&) = default;
};

struct Bundle {
  std::vector<SealedPackage> sealed;
  std::optional<Bytes> signature;
  std::optional<std::string> signer_id;

  friend bool operator==(const Bundle&, const Bundle&) = default;
};

struct NodeInfo {
  std::string url;
  RsaPublicKey key;
  double weight = 1.0;

  void validate() const;

  friend bool operator==(const NodeInfo&, const NodeInfo&) = default;
};

/// The anonymousSurvey parameter block.
struct SurveyDescriptor {
  std::string name;
  std::string id_svy;
  std::string lang = "en";
  std::string svr_url;
  std::string svr_auth;
  BigUint svr_s_cert;  // ticket-signing modulus
  BigUint svr_s_exp;
  bool keep_a = false;
  int rou_len = 0;
  std::string bbx_url;
  BigUint bbx_mod;
  BigUint bbx_exp;
  TimeMs end_d = 0;
  TimeMs clo_d = 0;  // 0 means "derive from endD"

  // Browser-UI fields, carried through untouched.
  std::optional<std::string> s_butt, area_log, pause, pause_if_ext, dis_ext, url_ext, refresh, min_ver, skip;

  std::vector<std::string> options;
  std::optional<SignatureMode> sig_mode;
  /// Unrecognised leaf elements, in document order.
  std::vector<std::pair<std::string, std::string>> extras;

  /// Minimum cloD - endD for a route length: (600 + rouLen*120) s.
  static TimeMs min_window_ms(int rou_len);
  TimeMs effective_clo_d() const;
  RsaPublicKey signing_key() const { return {svr_s_cert, svr_s_exp}; }
  RsaPublicKey ballot_box_key() const { return {bbx_mod, bbx_exp}; }
  SignatureMode signature_mode() const { return sig_mode.value_or(SignatureMode::raw); }
  void validate() const;

  friend bool operator==(const SurveyDescriptor&, const SurveyDescriptor&) = default;
};

/// Innermost plaintext delivered to the ballot box.
struct Participation {
  std::uint64_t p_chal = 0;
  Ticket ticket;
  Bytes signature;  // fixed width: signing modulus byte length
  PaddingMode padding = PaddingMode::none;
  Bytes form;

  friend bool operator==(const Participation&, const Participation&) = default;
};

std::string encode(const Ticket& ticket);
std::string encode(const OnionPackage& package);
std::string encode(const SealedPackage& package);
std::string encode(const Bundle& bundle);
std::string encode(const SurveyDescriptor& survey);
std::string encode(const NodeInfo& node);
std::string encode(const Participation& participation);
std::string encode_node_list(std::span<const NodeInfo> nodes);

Ticket decode_ticket(std::string_view xml);
/// Rejects a package whose chk does not match its recomputed checksum.
OnionPackage decode_onion_package(std::string_view xml);
SealedPackage decode_sealed_package(std::string_view xml);
Bundle decode_bundle(std::string_view xml);
SurveyDescriptor decode_survey_descriptor(std::string_view xml);
NodeInfo decode_node_info(std::string_view xml);
Participation decode_participation(std::string_view xml);
std::vector<NodeInfo> decode_node_list(std::string_view xml);

/// Accepts integer milliseconds or an ISO-8601 UTC datetime.
TimeMs parse_timestamp(std::string_view text);

// ---------------------------------------------------------------------------
// Bundle signatures (detached, over canonical bytes)

/// Each package as length-prefixed id, recipient, key, payload.
Bytes canonical_bytes(std::span<const SealedPackage> sealed);

Bundle sign_bundle(Bundle bundle, const RsaKeyPair& signer, const std::string& signer_id);

using TrustMap = std::map<std::string, RsaPublicKey, std::less<>>;

/// Never throws; unknown signers and bad signatures both yield false.
bool verify_bundle(const Bundle& bundle, const TrustMap& trust);

// ---------------------------------------------------------------------------
// SP exchanges

struct FormRequest {
  std::vector<std::pair<std::string, std::string>> fields;

  FormRequest& set(std::string key, std::string value);
  const std::string* find(std::string_view key) const;
  /// Throws missing_element.
  const std::string& get(std::string_view key) const;

  friend bool operator==(const FormRequest&, const FormRequest&) = default;
};

/// application/x-www-form-urlencoded.
std::string encode_form(const FormRequest& form);
FormRequest decode_form(std::string_view body);

struct PackageResponse {
  std::uint64_t id = 0;
  std::optional<std::uint64_t> challenge;
  std::string error;

  friend bool operator==(const PackageResponse&, const PackageResponse&) = default;
};

std::string response_authorised();
std::string response_server_time(TimeMs now);
std::string response_signed_ticket(const BigUint& signature);
std::string response_challenge(std::uint64_t challenge);
std::string response_packages(std::span<const PackageResponse> packages);
std::string response_error(ErrorCode code, std::string_view message);

struct ResponseDoc {
  bool authorised = false;
  std::optional<std::int64_t> server_time_s;
  std::optional<BigUint> signed_ticket;
  std::optional<std::uint64_t> challenge;
  std::vector<PackageResponse> packages;
  std::optional<int> error_code;
  std::string error_message;

  bool ok() const { return !error_code.has_value(); }
};

ResponseDoc decode_response(std::string_view xml);

std::string xml_escape(std::string_view text);

}  // namespace stork
