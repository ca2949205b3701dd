#include "stork/sp_service.hpp"

#include <algorithm>

#include "stork/onion.hpp"

namespace stork {

namespace {

void put_field(Bytes& out, ByteView field) {
  auto n = static_cast<std::uint32_t>(field.size());
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(n >> shift));
  out.insert(out.end(), field.begin(), field.end());
}

Bytes be64(TimeMs v) {
  Bytes b(8);
  auto u = static_cast<std::uint64_t>(v);
  for (int i = 7; i >= 0; --i, u >>= 8) b[i] = static_cast<std::uint8_t>(u);
  return b;
}

}  // namespace

Sha256Digest window_commitment(std::string_view survey_id, TimeMs end_d, TimeMs clo_d, const BigUint& modulus) {
  Bytes buf;
  put_field(buf, as_bytes(survey_id));
  put_field(buf, be64(end_d));
  put_field(buf, be64(clo_d));
  put_field(buf, to_bytes(modulus));
  return sha256(buf);
}

Sha256Digest window_commitment(const SurveyDescriptor& survey) {
  return window_commitment(survey.id_svy, survey.end_d, survey.effective_clo_d(), survey.svr_s_cert);
}

std::string_view to_string(SurveyState state) {
  switch (state) {
    case SurveyState::open: return "open";
    case SurveyState::signing_closed: return "signing_closed";
    case SurveyState::tallying: return "tallying";
    case SurveyState::closed: return "closed";
  }
  return "unknown";
}

bool RosterAuthorizer::authorize(const std::string& token, const std::string& survey_id, bool mark) {
  std::lock_guard lock(mutex_);
  if (!roster_.contains(token)) return false;
  if (mark) marked_.emplace(token, survey_id);
  return true;
}

bool RosterAuthorizer::participated(const std::string& token, const std::string& survey_id) const {
  std::lock_guard lock(mutex_);
  return marked_.contains({token, survey_id});
}

std::string_view to_string(BallotVerdict verdict) {
  switch (verdict) {
    case BallotVerdict::accepted: return "accepted";
    case BallotVerdict::duplicate: return "duplicate";
    case BallotVerdict::rejected: return "rejected";
  }
  return "unknown";
}

std::string_view to_string(BallotRejection reason) {
  switch (reason) {
    case BallotRejection::bad_decryption: return "bad_decryption";
    case BallotRejection::bad_signature: return "bad_signature";
    case BallotRejection::wrong_survey: return "wrong_survey";
    case BallotRejection::outside_window: return "outside_window";
    case BallotRejection::malformed: return "malformed";
  }
  return "unknown";
}

ServiceProvider::ServiceProvider(std::string url, RsaKeyPair entity_key, std::string entity_id,
                                 std::shared_ptr<Authorizer> auth, Gateway* gateway, RandomSource& rng)
    : url_(std::move(url)),
      entity_key_(std::move(entity_key)),
      entity_id_(std::move(entity_id)),
      auth_(std::move(auth)),
      gateway_(gateway),
      rng_(rng) {
  if (entity_key_.role() != KeyRole::entity_signing) throw Error(ErrorCode::policy, "SP entity key must sign bundles");
  if (!auth_) auth_ = std::make_shared<DemoAuthorizer>();
}

const SurveyRecord& ServiceProvider::create_survey(const SurveyParams& params) {
  if (params.clo_d - params.end_d < SurveyDescriptor::min_window_ms(params.rou_len)) {
    throw Error(ErrorCode::window_too_short, "cloD - endD must be at least " +
                                                 std::to_string(SurveyDescriptor::min_window_ms(params.rou_len)) +
                                                 " ms for rouLen " + std::to_string(params.rou_len));
  }
  std::lock_guard lock(mutex_);
  auto id = std::to_string(next_survey_++);
  auto signing = generate_keypair(params.key_bits, rng_, KeyRole::ticket_signing);
  auto ballot = generate_keypair(params.key_bits, rng_, KeyRole::encryption);
  while (ballot.modulus() == signing.modulus()) ballot = generate_keypair(params.key_bits, rng_, KeyRole::encryption);

  SurveyDescriptor d;
  d.name = params.name;
  d.id_svy = id;
  d.svr_url = url_;
  d.svr_s_cert = signing.modulus();
  d.svr_s_exp = signing.public_exponent();
  d.rou_len = params.rou_len;
  d.bbx_url = url_ + "/ballot/" + id;
  d.bbx_mod = ballot.modulus();
  d.bbx_exp = ballot.public_exponent();
  d.end_d = params.end_d;
  d.clo_d = params.clo_d;
  d.options = params.options;
  if (params.sig_mode != SignatureMode::raw) d.sig_mode = params.sig_mode;
  d.validate();

  Survey s{SurveyRecord{id, std::move(signing), std::move(ballot), d, window_commitment(d), SurveyState::open},
           {}, {}, std::nullopt};
  by_ballot_url_[d.bbx_url] = id;
  auto [it, _] = surveys_.emplace(id, std::move(s));
  return it->second.record;
}

const SurveyRecord& ServiceProvider::import_survey(const SurveyDescriptor& descriptor, RsaKeyPair signing,
                                                  RsaKeyPair ballot) {
  descriptor.validate();
  if (signing.role() != KeyRole::ticket_signing || ballot.role() != KeyRole::encryption) {
    throw Error(ErrorCode::policy, "survey keys carry the wrong roles");
  }
  if (signing.public_key() != descriptor.signing_key() || ballot.public_key() != descriptor.ballot_box_key()) {
    throw Error(ErrorCode::invariant, "survey keys do not match the descriptor");
  }
  if (signing.modulus() == ballot.modulus()) throw Error(ErrorCode::invariant, "signing and ballot keys coincide");
  std::lock_guard lock(mutex_);
  if (surveys_.contains(descriptor.id_svy)) throw Error(ErrorCode::invariant, "survey already known");
  Survey s{SurveyRecord{descriptor.id_svy, std::move(signing), std::move(ballot), descriptor,
                        window_commitment(descriptor), SurveyState::open},
           {}, {}, std::nullopt};
  by_ballot_url_[descriptor.bbx_url] = descriptor.id_svy;
  auto [it, _] = surveys_.emplace(descriptor.id_svy, std::move(s));
  return it->second.record;
}

ServiceProvider::Survey& ServiceProvider::find(const std::string& survey_id) {
  auto it = surveys_.find(survey_id);
  if (it == surveys_.end()) throw Error(ErrorCode::unknown_survey, "unknown survey " + survey_id);
  return it->second;
}

const ServiceProvider::Survey& ServiceProvider::find(const std::string& survey_id) const {
  auto it = surveys_.find(survey_id);
  if (it == surveys_.end()) throw Error(ErrorCode::unknown_survey, "unknown survey " + survey_id);
  return it->second;
}

const SurveyRecord& ServiceProvider::survey(const std::string& survey_id) const {
  std::lock_guard lock(mutex_);
  return find(survey_id).record;
}

std::vector<std::string> ServiceProvider::survey_ids() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, _] : surveys_) out.push_back(id);
  return out;
}

void ServiceProvider::advance(Survey& s, TimeMs now) {
  auto& r = s.record;
  if (r.state == SurveyState::open && now >= r.descriptor.end_d) r.state = SurveyState::signing_closed;
  if (r.state == SurveyState::signing_closed && now >= r.descriptor.effective_clo_d()) r.state = SurveyState::tallying;
}

SurveyState ServiceProvider::state(const std::string& survey_id, TimeMs now) {
  std::lock_guard lock(mutex_);
  auto& s = find(survey_id);
  advance(s, now);
  return s.record.state;
}

Sha256Digest ServiceProvider::commitment(const std::string& survey_id) const {
  std::lock_guard lock(mutex_);
  return find(survey_id).record.commitment;
}

bool ServiceProvider::authorize(const std::string& token, const std::string& survey_id, bool mark) {
  return auth_->authorize(token, survey_id, mark);
}

BigUint ServiceProvider::blind_sign_ticket(const std::string& token, const std::string& survey_id, const BigUint& opct,
                                           TimeMs now) {
  if (!authorize(token, survey_id, true)) throw Error(ErrorCode::not_authorized, "voter not authorised");
  std::lock_guard lock(mutex_);
  auto& s = find(survey_id);
  advance(s, now);
  sign_log_.push_back({token, survey_id, now});
  if (s.record.state != SurveyState::open || now >= s.record.descriptor.end_d) {
    throw Error(ErrorCode::window_closed, "signing closed at endD");
  }
  if (opct <= 0 || opct >= s.record.signing.modulus()) throw Error(ErrorCode::out_of_range, "opct outside (0, N)");
  // An empty token is the anonymous demo voter; nothing to register.
  if (!token.empty()) {
    if (auto it = s.registry.find(token); it != s.registry.end()) {
      if (it->second.opct == opct) return it->second.signature;
      ++refusals_;
      throw Error(ErrorCode::conflicting_ticket, "a different ticket was already signed for this voter");
    }
  }
  auto signature = sign_blinded(opct, s.record.signing);
  if (!token.empty()) s.registry.emplace(token, Issued{opct, signature});
  return signature;
}

IngestResult ServiceProvider::proxy_bundle(const std::string& token, const std::string& survey_id, Bundle bundle,
                                           TimeMs now) {
  if (!authorize(token, survey_id, false)) throw Error(ErrorCode::not_authorized, "voter not authorised");
  if (!gateway_) throw Error(ErrorCode::transport, "no gateway configured");
  bundle = sign_bundle(std::move(bundle), entity_key_, entity_id_);
  return gateway_->ingest_bundle(bundle, now);
}

BallotOutcome ServiceProvider::reject(Survey* s, BallotOutcome out, BallotRejection reason) {
  out.verdict = BallotVerdict::rejected;
  out.reason = reason;
  if (s) ++s->box.rejected[std::string(to_string(reason))];
  return out;
}

BallotOutcome ServiceProvider::receive_ballot(const SealedPackage& sealed, TimeMs now) {
  std::lock_guard lock(mutex_);
  BallotOutcome out;
  auto where = by_ballot_url_.find(sealed.recipient);
  if (where == by_ballot_url_.end()) {
    ++unknown_ballots_;
    return reject(nullptr, out, BallotRejection::bad_decryption);
  }
  auto& s = find(where->second);
  out.survey_id = s.record.survey_id;

  Bytes plain;
  try {
    plain = hybrid_open(sealed.envelope(), s.record.ballot);
  } catch (const Error&) {
    return reject(&s, out, BallotRejection::bad_decryption);
  }
  Participation p;
  try {
    p = decode_participation(to_string(plain));
  } catch (const Error&) {
    return reject(&s, out, BallotRejection::malformed);
  }
  out.challenge = p.p_chal;
  out.id_ticket = p.ticket.id_ticket;

  const auto& d = s.record.descriptor;
  BigUint message;
  try {
    p.ticket.validate();
    message = ticket_message(p.ticket);
  } catch (const Error&) {
    return reject(&s, out, BallotRejection::malformed);
  }
  auto pub = s.record.signing.public_key();
  if (p.signature.size() != pub.byte_length() ||
      !verify_signature(message, from_bytes(p.signature), pub, d.signature_mode())) {
    return reject(&s, out, BallotRejection::bad_signature);
  }
  if (p.ticket.id_survey != s.record.survey_id) return reject(&s, out, BallotRejection::wrong_survey);

  TimeMs lo = d.end_d, hi = d.effective_clo_d();
  if (s.window_override) {
    std::tie(lo, hi) = *s.window_override;
  } else if (p.ticket.end_time != d.end_d || p.ticket.close_time != d.effective_clo_d()) {
    return reject(&s, out, BallotRejection::outside_window);
  }
  if (now < lo || now > hi) return reject(&s, out, BallotRejection::outside_window);

  Bytes payload;
  try {
    payload = unpad_payload(p.form, p.padding);
  } catch (const Error&) {
    return reject(&s, out, BallotRejection::malformed);
  }
  if (s.box.accepted.contains(p.ticket.id_ticket)) {
    ++s.box.duplicates;
    out.verdict = BallotVerdict::duplicate;
    return out;
  }
  s.box.accepted.emplace(p.ticket.id_ticket, BallotEntry{p.ticket, std::move(payload), now});
  out.verdict = BallotVerdict::accepted;
  return out;
}

void ServiceProvider::override_acceptance_window(const std::string& survey_id, TimeMs lo, TimeMs hi) {
  std::lock_guard lock(mutex_);
  find(survey_id).window_override = std::make_pair(lo, hi);
}

TallyResult ServiceProvider::tally_locked(Survey& s, TimeMs now) {
  TimeMs close = s.record.descriptor.effective_clo_d();
  if (s.window_override) close = std::max(close, s.window_override->second);
  if (now <= close) throw Error(ErrorCode::window_closed, "tally only after cloD");
  advance(s, now);
  TallyResult t;
  t.survey_id = s.record.survey_id;
  for (const auto& o : s.record.descriptor.options) t.counts[o] = 0;
  for (const auto& [id, entry] : s.box.accepted) {
    t.entries.push_back(entry);
    ++t.counts[to_string(entry.payload)];
  }
  t.duplicates = s.box.duplicates;
  t.rejected = s.box.rejected;
  return t;
}

TallyResult ServiceProvider::tally(const std::string& survey_id, TimeMs now) {
  std::lock_guard lock(mutex_);
  return tally_locked(find(survey_id), now);
}

std::string ServiceProvider::tally_and_publish(const std::string& survey_id, TimeMs now) {
  std::lock_guard lock(mutex_);
  auto& s = find(survey_id);
  auto t = tally_locked(s, now);
  s.record.state = SurveyState::closed;

  const auto& d = s.record.descriptor;
  std::string xml = "<audit idSvy=\"" + xml_escape(t.survey_id) + "\" endD=\"" + std::to_string(d.end_d) +
                    "\" cloD=\"" + std::to_string(d.effective_clo_d()) + "\" commitment=\"" +
                    to_hex(s.record.commitment) + "\">";
  xml += "<tickets count=\"" + std::to_string(t.entries.size()) + "\">";
  for (const auto& e : t.entries) {
    xml += "<ticket id=\"" + xml_escape(e.ticket.id_ticket) + "\">" + base64_encode(e.payload) + "</ticket>";
  }
  xml += "</tickets><counts>";
  for (const auto& [option, n] : t.counts) {
    xml += "<option name=\"" + xml_escape(option) + "\">" + std::to_string(n) + "</option>";
  }
  xml += "</counts><duplicates>" + std::to_string(t.duplicates) + "</duplicates><rejected>";
  for (const auto& [reason, n] : t.rejected) {
    xml += "<reason name=\"" + reason + "\">" + std::to_string(n) + "</reason>";
  }
  xml += "</rejected></audit>";
  return xml;
}

std::string ServiceProvider::handle_request(const FormRequest& form, TimeMs now) {
  try {
    const auto& param = form.get("param");
    if (param == "date") return server_time(now);
    auto token = form.find("token") ? *form.find("token") : std::string{};
    const auto& survey_id = form.get("idsvy");
    if (param == "auth") {
      if (!authorize(token, survey_id, false)) return response_error(ErrorCode::not_authorized, "not authorised");
      return response_authorised();
    }
    if (param == "ssign") {
      return response_signed_ticket(blind_sign_ticket(token, survey_id, from_base64(form.get("opct")), now));
    }
    if (param == "proxy") {
      auto result = proxy_bundle(token, survey_id, decode_bundle(form.get("bundle")), now);
      if (!result.accepted()) return response_error(ErrorCode::not_authorized, to_string(*result.rejection));
      return response_packages(result.responses);
    }
    return response_error(ErrorCode::invalid_argument, "unknown param " + param);
  } catch (const Error& e) {
    return response_error(e.code(), e.what());
  }
}

std::vector<SignRequest> ServiceProvider::sign_log() const {
  std::lock_guard lock(mutex_);
  return sign_log_;
}

std::uint64_t ServiceProvider::refusals() const {
  std::lock_guard lock(mutex_);
  return refusals_;
}

}  // namespace stork
