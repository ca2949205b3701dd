#include "stork/wire.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <ctime>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

namespace stork {

namespace pt = boost::property_tree;

namespace {

// --- writing ---------------------------------------------------------------

class XmlWriter {
 public:
  XmlWriter& open(std::string_view name) {
    out_ += '<';
    out_ += name;
    out_ += '>';
    return *this;
  }
  XmlWriter& close(std::string_view name) {
    out_ += "</";
    out_ += name;
    out_ += '>';
    return *this;
  }
  XmlWriter& leaf(std::string_view name, std::string_view text) {
    open(name);
    out_ += xml_escape(text);
    return close(name);
  }
  XmlWriter& leaf(std::string_view name, std::int64_t value) { return leaf(name, std::to_string(value)); }
  XmlWriter& leaf_u(std::string_view name, std::uint64_t value) { return leaf(name, std::to_string(value)); }
  XmlWriter& raw(std::string_view xml) {
    out_ += xml;
    return *this;
  }
  std::string str() && { return std::move(out_); }

 private:
  std::string out_;
};

void append_field(Bytes& out, ByteView field) {
  auto n = static_cast<std::uint32_t>(field.size());
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(n >> shift));
  out.insert(out.end(), field.begin(), field.end());
}

void append_field(Bytes& out, std::string_view text) { append_field(out, as_bytes(text)); }

// --- reading ---------------------------------------------------------------

bool is_meta(const std::string& key) { return key == "<xmlattr>" || key == "<xmlcomment>"; }

pt::ptree parse_document(std::string_view xml, std::string_view root_name, pt::ptree& root_out) {
  pt::ptree doc;
  try {
    std::istringstream in{std::string(xml)};
    pt::read_xml(in, doc, pt::xml_parser::no_comments);
  } catch (const pt::xml_parser_error& e) {
    throw Error(ErrorCode::malformed, e.message());
  }
  const pt::ptree* root = nullptr;
  std::string found;
  for (const auto& [key, child] : doc) {
    if (is_meta(key)) continue;
    if (root) throw Error(ErrorCode::malformed, "multiple root elements");
    root = &child;
    found = key;
  }
  if (!root) throw Error(ErrorCode::malformed, "no root element");
  if (found != root_name) {
    throw Error(ErrorCode::unknown_root, "expected <" + std::string(root_name) + ">, found <" + found + ">");
  }
  root_out = *root;
  return doc;
}

pt::ptree root_of(std::string_view xml, std::string_view name) {
  pt::ptree root;
  parse_document(xml, name, root);
  return root;
}

std::optional<std::string> child_text(const pt::ptree& node, std::string_view name) {
  auto it = node.find(std::string(name));
  if (it == node.not_found()) return std::nullopt;
  return it->second.data();
}

std::string required_text(const pt::ptree& node, std::string_view name) {
  auto text = child_text(node, name);
  if (!text) throw Error(ErrorCode::missing_element, "<" + std::string(name) + ">");
  return *text;
}

std::optional<std::string> attribute(const pt::ptree& node, std::string_view name) {
  auto attrs = node.get_child_optional("<xmlattr>");
  if (!attrs) return std::nullopt;
  auto it = attrs->find(std::string(name));
  if (it == attrs->not_found()) return std::nullopt;
  return it->second.data();
}

template <typename Int>
Int parse_int(std::string_view text, std::string_view what) {
  Int value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    throw Error(ErrorCode::malformed, std::string(what) + ": not an integer: '" + std::string(text) + "'");
  }
  return value;
}

std::uint64_t parse_u64(std::string_view text, std::string_view what) { return parse_int<std::uint64_t>(text, what); }

bool parse_bool(std::string_view text, std::string_view what) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0" || text.empty()) return false;
  throw Error(ErrorCode::malformed, std::string(what) + ": not a boolean");
}

Md5Digest parse_md5(std::string_view text) {
  Bytes raw = from_hex(text);
  if (raw.size() != 16) throw Error(ErrorCode::malformed, "chk is not a 16-byte digest");
  Md5Digest out{};
  std::copy(raw.begin(), raw.end(), out.begin());
  return out;
}

std::string ticket_body(const Ticket& t) {
  return std::move(XmlWriter{}
                       .open("ticket")
                       .leaf("idTicket", t.id_ticket)
                       .leaf("idSurvey", t.id_survey)
                       .leaf("endTime", t.end_time)
                       .leaf("closeTime", t.close_time)
                       .close("ticket"))
      .str();
}

Ticket ticket_from(const pt::ptree& node) {
  Ticket t;
  t.id_ticket = required_text(node, "idTicket");
  t.id_survey = required_text(node, "idSurvey");
  t.end_time = parse_timestamp(required_text(node, "endTime"));
  t.close_time = parse_timestamp(required_text(node, "closeTime"));
  t.validate();
  return t;
}

SealedPackage sealed_from(const pt::ptree& node) {
  SealedPackage p;
  p.id = parse_u64(required_text(node, "id"), "id");
  p.payload = base64_decode(required_text(node, "payload"));
  p.key = base64_decode(required_text(node, "key"));
  p.recipient = required_text(node, "recipient");
  p.validate();
  return p;
}

NodeInfo node_from(const pt::ptree& node) {
  NodeInfo n;
  n.url = required_text(node, "url");
  n.key.modulus = from_base64(required_text(node, "modulus"));
  n.key.exponent = from_base64(required_text(node, "exponent"));
  auto weight = required_text(node, "weight");
  auto [ptr, ec] = std::from_chars(weight.data(), weight.data() + weight.size(), n.weight);
  if (ec != std::errc{} || ptr != weight.data() + weight.size()) throw Error(ErrorCode::malformed, "weight");
  n.validate();
  return n;
}

std::string format_weight(double weight) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, weight);
  return std::string(buf, ptr);
}

}  // namespace

std::string xml_escape(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

// --- Ticket ------------------------------------------------------------------

void Ticket::validate() const {
  Bytes id;
  try {
    id = base64_decode(id_ticket);
  } catch (const Error&) {
    throw Error(ErrorCode::invariant, "idTicket is not base64");
  }
  if (id.size() != kTicketIdBytes) {
    throw Error(ErrorCode::invariant, "idTicket decodes to " + std::to_string(id.size()) + " bytes, expected 21");
  }
  if (id_survey.empty() || !std::all_of(id_survey.begin(), id_survey.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw Error(ErrorCode::invariant, "idSurvey must be decimal");
  }
  if (close_time <= end_time) throw Error(ErrorCode::invariant, "closeTime must be after endTime");
}

BigUint ticket_message(const Ticket& ticket) {
  ticket.validate();
  Bytes out{0x01};
  Bytes id = base64_decode(ticket.id_ticket);
  out.insert(out.end(), id.begin(), id.end());
  auto push64 = [&out](std::uint64_t v) {
    for (int shift = 56; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
  };
  push64(parse_u64(ticket.id_survey, "idSurvey"));
  push64(static_cast<std::uint64_t>(ticket.end_time));
  push64(static_cast<std::uint64_t>(ticket.close_time));
  return from_bytes(out);
}

std::string encode(const Ticket& ticket) {
  ticket.validate();
  return ticket_body(ticket);
}

Ticket decode_ticket(std::string_view xml) { return ticket_from(root_of(xml, "ticket")); }

std::string_view to_string(PaddingMode mode) {
  switch (mode) {
    case PaddingMode::none: return "none";
    case PaddingMode::random: return "random";
    case PaddingMode::equalize: return "equalize";
  }
  return "none";
}

PaddingMode padding_mode_from_string(std::string_view text) {
  if (text == "none") return PaddingMode::none;
  if (text == "random") return PaddingMode::random;
  if (text == "equalize") return PaddingMode::equalize;
  throw Error(ErrorCode::invalid_argument, "unknown padding mode '" + std::string(text) + "'");
}

// --- OnionPackage ------------------------------------------------------------

Md5Digest OnionPackage::compute_checksum() const {
  Bytes canon;
  append_field(canon, cryp);
  append_field(canon, evkey);
  append_field(canon, url);
  append_field(canon, std::to_string(chal));
  append_field(canon, std::to_string(p_chal));
  append_field(canon, std::to_string(snd_d));
  append_field(canon, std::to_string(clo_d));
  append_field(canon, std::to_string(rej_d));
  return md5_checksum(canon);
}

void OnionPackage::validate() const {
  if (!(snd_d <= clo_d && clo_d <= rej_d)) throw Error(ErrorCode::invariant, "require sndD <= cloD <= rejD");
  if (cryp.empty() != evkey.empty()) throw Error(ErrorCode::invariant, "cryp and evkey must both be present or absent");
}

std::string encode(const OnionPackage& p) {
  p.validate();
  return std::move(XmlWriter{}
                       .open("package")
                       .leaf("cryp", base64_encode(p.cryp))
                       .leaf("evkey", base64_encode(p.evkey))
                       .leaf("chk", to_hex(p.chk))
                       .leaf("url", p.url)
                       .leaf_u("chal", p.chal)
                       .leaf_u("pChal", p.p_chal)
                       .leaf("sndD", p.snd_d)
                       .leaf("cloD", p.clo_d)
                       .leaf("rejD", p.rej_d)
                       .close("package"))
      .str();
}

OnionPackage decode_onion_package(std::string_view xml) {
  auto node = root_of(xml, "package");
  OnionPackage p;
  p.cryp = base64_decode(required_text(node, "cryp"));
  p.evkey = base64_decode(required_text(node, "evkey"));
  p.chk = parse_md5(required_text(node, "chk"));
  p.url = required_text(node, "url");
  p.chal = parse_u64(required_text(node, "chal"), "chal");
  p.p_chal = parse_u64(required_text(node, "pChal"), "pChal");
  p.snd_d = parse_timestamp(required_text(node, "sndD"));
  p.clo_d = parse_timestamp(required_text(node, "cloD"));
  p.rej_d = parse_timestamp(required_text(node, "rejD"));
  if (p.chk != p.compute_checksum()) throw Error(ErrorCode::integrity, "chk mismatch");
  p.validate();
  return p;
}

// --- SealedPackage / Bundle ----------------------------------------------------

void SealedPackage::validate() const {
  if (payload.empty() || key.empty()) throw Error(ErrorCode::invariant, "sealed package needs payload and key");
}

std::string encode(const SealedPackage& p) {
  p.validate();
  return std::move(XmlWriter{}
                       .open("sealedPackage")
                       .leaf_u("id", p.id)
                       .leaf("payload", base64_encode(p.payload))
                       .leaf("key", base64_encode(p.key))
                       .leaf("recipient", p.recipient)
                       .close("sealedPackage"))
      .str();
}

SealedPackage decode_sealed_package(std::string_view xml) { return sealed_from(root_of(xml, "sealedPackage")); }

std::string encode(const Bundle& bundle) {
  XmlWriter w;
  w.open("bundle");
  for (const auto& p : bundle.sealed) w.raw(encode(p));
  if (bundle.signature) {
    w.raw("<signature signer=\"" + xml_escape(bundle.signer_id.value_or("")) + "\">");
    w.raw(base64_encode(*bundle.signature));
    w.close("signature");
  }
  w.close("bundle");
  return std::move(w).str();
}

Bundle decode_bundle(std::string_view xml) {
  auto node = root_of(xml, "bundle");
  Bundle b;
  for (const auto& [key, child] : node) {
    if (key == "sealedPackage") {
      b.sealed.push_back(sealed_from(child));
    } else if (key == "signature") {
      b.signature = base64_decode(child.data());
      b.signer_id = attribute(child, "signer").value_or("");
    }
  }
  return b;
}

Bytes canonical_bytes(std::span<const SealedPackage> sealed) {
  Bytes out;
  for (const auto& p : sealed) {
    append_field(out, std::to_string(p.id));
    append_field(out, p.recipient);
    append_field(out, p.key);
    append_field(out, p.payload);
  }
  return out;
}

namespace {
BigUint bundle_digest(const Bundle& bundle, const RsaPublicKey& key) {
  return from_bytes(sha256(canonical_bytes(bundle.sealed))) % key.modulus;
}
}  // namespace

Bundle sign_bundle(Bundle bundle, const RsaKeyPair& signer, const std::string& signer_id) {
  BigUint sig = signer.private_op(bundle_digest(bundle, signer.public_key()), KeyRole::entity_signing);
  bundle.signature = to_bytes_fixed(sig, signer.public_key().byte_length());
  bundle.signer_id = signer_id;
  return bundle;
}

bool verify_bundle(const Bundle& bundle, const TrustMap& trust) {
  if (!bundle.signature || !bundle.signer_id) return false;
  auto it = trust.find(*bundle.signer_id);
  if (it == trust.end()) return false;
  const auto& key = it->second;
  BigUint sig = from_bytes(*bundle.signature);
  if (sig >= key.modulus) return false;
  return mod_pow(sig, key.exponent, key.modulus) == bundle_digest(bundle, key);
}

// --- NodeInfo ----------------------------------------------------------------

void NodeInfo::validate() const {
  if (!(weight > 0)) throw Error(ErrorCode::invariant, "node weight must be positive");
  if (url.empty()) throw Error(ErrorCode::invariant, "node url is empty");
}

std::string encode(const NodeInfo& n) {
  n.validate();
  return std::move(XmlWriter{}
                       .open("node")
                       .leaf("url", n.url)
                       .leaf("modulus", to_base64(n.key.modulus))
                       .leaf("exponent", to_base64(n.key.exponent))
                       .leaf("weight", format_weight(n.weight))
                       .close("node"))
      .str();
}

NodeInfo decode_node_info(std::string_view xml) { return node_from(root_of(xml, "node")); }

std::string encode_node_list(std::span<const NodeInfo> nodes) {
  XmlWriter w;
  w.open("nodes");
  for (const auto& n : nodes) w.raw(encode(n));
  w.close("nodes");
  return std::move(w).str();
}

std::vector<NodeInfo> decode_node_list(std::string_view xml) {
  auto root = root_of(xml, "nodes");
  std::vector<NodeInfo> out;
  for (const auto& [key, child] : root) {
    if (key == "node") out.push_back(node_from(child));
  }
  return out;
}

// --- SurveyDescriptor --------------------------------------------------------

TimeMs SurveyDescriptor::min_window_ms(int rou_len) { return (600 + static_cast<TimeMs>(rou_len) * 120) * 1000; }

TimeMs SurveyDescriptor::effective_clo_d() const {
  if (clo_d != 0) return clo_d;
  return end_d + 2 * min_window_ms(rou_len);
}

void SurveyDescriptor::validate() const {
  if (rou_len < 0 || rou_len > 6) throw Error(ErrorCode::invariant, "rouLen must be in [0, 6]");
  if (id_svy.empty()) throw Error(ErrorCode::invariant, "idSvy is empty");
  if (clo_d != 0 && clo_d - end_d < min_window_ms(rou_len)) {
    throw Error(ErrorCode::window_too_short, "cloD - endD below (600 + rouLen*120) s");
  }
}

namespace {

struct OptionalField {
  std::string_view name;
  std::optional<std::string> SurveyDescriptor::*member;
};

constexpr OptionalField kUiFields[] = {
    {"sButt", &SurveyDescriptor::s_butt},       {"areaLog", &SurveyDescriptor::area_log},
    {"pause", &SurveyDescriptor::pause},        {"pauseIfExt", &SurveyDescriptor::pause_if_ext},
    {"disExt", &SurveyDescriptor::dis_ext},     {"urlExt", &SurveyDescriptor::url_ext},
    {"refresh", &SurveyDescriptor::refresh},    {"minVer", &SurveyDescriptor::min_ver},
    {"skip", &SurveyDescriptor::skip},
};

// Element names the decoder understands, including the spellings used in the
// field list as opposed to the example listing.
constexpr std::string_view kKnownSurveyElements[] = {
    "name",   "idSvy",  "lang",   "svrUrl", "srvUrl", "svrAuth", "srvAuth", "svrSCert", "srvCert", "svrSExp",
    "SRVeXP", "srvExp", "keepA",  "rouLen", "bBxUrl", "bBxMod",  "bBxExp",  "endD",     "cloD",    "options",
    "sigMode"};

std::optional<std::string> first_of(const pt::ptree& node, std::initializer_list<std::string_view> names) {
  for (auto name : names) {
    if (auto text = child_text(node, name)) return text;
  }
  return std::nullopt;
}

std::string required_of(const pt::ptree& node, std::initializer_list<std::string_view> names) {
  auto text = first_of(node, names);
  if (!text) throw Error(ErrorCode::missing_element, "<" + std::string(*names.begin()) + ">");
  return *text;
}

}  // namespace

std::string encode(const SurveyDescriptor& s) {
  s.validate();
  XmlWriter w;
  w.open("anonymousSurvey")
      .leaf("name", s.name)
      .leaf("idSvy", s.id_svy)
      .leaf("lang", s.lang)
      .leaf("svrUrl", s.svr_url)
      .leaf("svrAuth", s.svr_auth)
      .leaf("svrSCert", to_base64(s.svr_s_cert))
      .leaf("svrSExp", to_base64(s.svr_s_exp))
      .leaf("keepA", s.keep_a ? "true" : "false")
      .leaf("rouLen", s.rou_len)
      .leaf("bBxUrl", s.bbx_url)
      .leaf("bBxMod", to_base64(s.bbx_mod))
      .leaf("bBxExp", to_base64(s.bbx_exp))
      .leaf("endD", s.end_d)
      .leaf("cloD", s.clo_d);
  for (const auto& field : kUiFields) {
    if (const auto& value = s.*field.member) w.leaf(field.name, *value);
  }
  if (!s.options.empty()) {
    w.open("options");
    for (const auto& o : s.options) w.leaf("option", o);
    w.close("options");
  }
  if (s.sig_mode) w.leaf("sigMode", to_string(*s.sig_mode));
  for (const auto& [name, text] : s.extras) w.leaf(name, text);
  w.close("anonymousSurvey");
  return std::move(w).str();
}

SurveyDescriptor decode_survey_descriptor(std::string_view xml) {
  auto node = root_of(xml, "anonymousSurvey");
  SurveyDescriptor s;
  s.name = child_text(node, "name").value_or("");
  s.id_svy = required_text(node, "idSvy");
  s.lang = child_text(node, "lang").value_or("en");
  s.svr_url = required_of(node, {"svrUrl", "srvUrl"});
  s.svr_auth = first_of(node, {"svrAuth", "srvAuth"}).value_or("");
  s.svr_s_cert = from_base64(required_of(node, {"svrSCert", "srvCert"}));
  s.svr_s_exp = from_base64(required_of(node, {"svrSExp", "SRVeXP", "srvExp"}));
  s.keep_a = parse_bool(child_text(node, "keepA").value_or("false"), "keepA");
  s.rou_len = parse_int<int>(required_text(node, "rouLen"), "rouLen");
  s.bbx_url = required_text(node, "bBxUrl");
  s.bbx_mod = from_base64(required_text(node, "bBxMod"));
  s.bbx_exp = from_base64(required_text(node, "bBxExp"));
  s.end_d = parse_timestamp(required_text(node, "endD"));
  s.clo_d = parse_timestamp(required_text(node, "cloD"));
  for (const auto& field : kUiFields) s.*field.member = child_text(node, field.name);
  if (auto opts = node.get_child_optional("options")) {
    for (const auto& [key, child] : *opts) {
      if (key == "option") s.options.push_back(child.data());
    }
  }
  if (auto mode = child_text(node, "sigMode")) s.sig_mode = signature_mode_from_string(*mode);
  for (const auto& [key, child] : node) {
    if (is_meta(key)) continue;
    bool known = std::find(std::begin(kKnownSurveyElements), std::end(kKnownSurveyElements), key) !=
                 std::end(kKnownSurveyElements);
    bool ui = std::any_of(std::begin(kUiFields), std::end(kUiFields), [&](const auto& f) { return f.name == key; });
    if (!known && !ui) s.extras.emplace_back(key, child.data());
  }
  s.validate();
  return s;
}

// --- Participation -----------------------------------------------------------

std::string encode(const Participation& p) {
  p.ticket.validate();
  XmlWriter w;
  w.open("participation").leaf_u("pChal", p.p_chal).raw(ticket_body(p.ticket));
  w.leaf("signature", base64_encode(p.signature));
  w.raw("<form pad=\"" + std::string(to_string(p.padding)) + "\">");
  w.raw(base64_encode(p.form)).close("form");
  w.close("participation");
  return std::move(w).str();
}

Participation decode_participation(std::string_view xml) {
  auto node = root_of(xml, "participation");
  Participation p;
  p.p_chal = parse_u64(required_text(node, "pChal"), "pChal");
  auto ticket = node.get_child_optional("ticket");
  if (!ticket) throw Error(ErrorCode::missing_element, "<ticket>");
  p.ticket = ticket_from(*ticket);
  p.signature = base64_decode(required_text(node, "signature"));
  auto form = node.get_child_optional("form");
  if (!form) throw Error(ErrorCode::missing_element, "<form>");
  p.padding = padding_mode_from_string(attribute(*form, "pad").value_or("none"));
  p.form = base64_decode(form->data());
  return p;
}

// --- timestamps ----------------------------------------------------------------

TimeMs parse_timestamp(std::string_view text) {
  if (!text.empty() && std::all_of(text.begin(), text.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    return parse_int<TimeMs>(text, "timestamp");
  }
  // ISO-8601: YYYY-MM-DDTHH:MM:SS[.fff][Z|+HH:MM|-HH:MM]
  std::string s(text);
  std::tm tm{};
  int consumed = 0;
  if (std::sscanf(s.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%n", &tm.tm_year, &tm.tm_mon, &tm.tm_mday, &tm.tm_hour,
                  &tm.tm_min, &tm.tm_sec, &consumed) != 6) {
    throw Error(ErrorCode::malformed, "timestamp: '" + s + "'");
  }
  tm.tm_year -= 1900;
  tm.tm_mon -= 1;
  TimeMs ms = 0;
  std::string_view rest = std::string_view(s).substr(static_cast<std::size_t>(consumed));
  if (!rest.empty() && rest.front() == '.') {
    rest.remove_prefix(1);
    int digits = 0;
    while (!rest.empty() && rest.front() >= '0' && rest.front() <= '9') {
      if (digits < 3) ms = ms * 10 + (rest.front() - '0');
      ++digits;
      rest.remove_prefix(1);
    }
    for (; digits < 3; ++digits) ms *= 10;
  }
  TimeMs offset_s = 0;
  if (rest == "Z" || rest.empty()) {
  } else if ((rest.front() == '+' || rest.front() == '-') && rest.size() == 6 && rest[3] == ':') {
    int hh = parse_int<int>(rest.substr(1, 2), "tz"), mm = parse_int<int>(rest.substr(4, 2), "tz");
    offset_s = (hh * 3600 + mm * 60) * (rest.front() == '+' ? 1 : -1);
  } else {
    throw Error(ErrorCode::malformed, "timestamp zone: '" + s + "'");
  }
  TimeMs seconds = static_cast<TimeMs>(timegm(&tm)) - offset_s;
  return seconds * 1000 + ms;
}

// --- forms -------------------------------------------------------------------

FormRequest& FormRequest::set(std::string key, std::string value) {
  for (auto& [k, v] : fields) {
    if (k == key) {
      v = std::move(value);
      return *this;
    }
  }
  fields.emplace_back(std::move(key), std::move(value));
  return *this;
}

const std::string* FormRequest::find(std::string_view key) const {
  for (const auto& [k, v] : fields) {
    if (k == key) return &v;
  }
  return nullptr;
}

const std::string& FormRequest::get(std::string_view key) const {
  if (auto* v = find(key)) return *v;
  throw Error(ErrorCode::missing_element, "form field '" + std::string(key) + "'");
}

namespace {

std::string percent_encode(std::string_view text) {
  static constexpr char digits[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : text) {
    if ((c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-' || c == '_' ||
        c == '.' || c == '~') {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += digits[c >> 4];
      out += digits[c & 0x0f];
    }
  }
  return out;
}

std::string percent_decode(std::string_view text) {
  std::string out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (c == '+') {
      out += ' ';
    } else if (c == '%') {
      if (i + 2 >= text.size()) throw Error(ErrorCode::malformed, "truncated percent escape");
      out += static_cast<char>(from_hex(text.substr(i + 1, 2))[0]);
      i += 2;
    } else {
      out += c;
    }
  }
  return out;
}

}  // namespace

std::string encode_form(const FormRequest& form) {
  std::string out;
  for (const auto& [k, v] : form.fields) {
    if (!out.empty()) out += '&';
    out += percent_encode(k);
    out += '=';
    out += percent_encode(v);
  }
  return out;
}

FormRequest decode_form(std::string_view body) {
  FormRequest form;
  while (!body.empty()) {
    auto amp = body.find('&');
    auto pair = body.substr(0, amp);
    body = amp == std::string_view::npos ? std::string_view{} : body.substr(amp + 1);
    if (pair.empty()) continue;
    auto eq = pair.find('=');
    if (eq == std::string_view::npos) throw Error(ErrorCode::malformed, "form field without '='");
    form.fields.emplace_back(percent_decode(pair.substr(0, eq)), percent_decode(pair.substr(eq + 1)));
  }
  return form;
}

// --- responses -----------------------------------------------------------------

std::string response_authorised() { return "<response><authorised/></response>"; }

std::string response_server_time(TimeMs now) {
  TimeMs seconds = now >= 0 ? now / 1000 : -((-now + 999) / 1000);
  return "<response><serverTime format=\"unix\">" + std::to_string(seconds) + "</serverTime></response>";
}

std::string response_signed_ticket(const BigUint& signature) {
  return "<response><signedTicket>" + to_base64(signature) + "</signedTicket></response>";
}

std::string response_challenge(std::uint64_t challenge) {
  return "<response><challenge>" + std::to_string(challenge) + "</challenge></response>";
}

std::string response_packages(std::span<const PackageResponse> packages) {
  std::string out = "<response>";
  for (const auto& p : packages) {
    out += "<package id=\"" + std::to_string(p.id) + "\">";
    if (p.challenge) {
      out += "<challenge>" + std::to_string(*p.challenge) + "</challenge>";
    } else {
      out += "<error>" + xml_escape(p.error) + "</error>";
    }
    out += "</package>";
  }
  return out + "</response>";
}

std::string response_error(ErrorCode code, std::string_view message) {
  return "<response><error code=\"" + std::to_string(wire_code(code)) + "\">" + xml_escape(message) +
         "</error></response>";
}

ResponseDoc decode_response(std::string_view xml) {
  auto node = root_of(xml, "response");
  ResponseDoc r;
  for (const auto& [key, child] : node) {
    if (key == "authorised") {
      r.authorised = true;
    } else if (key == "serverTime") {
      if (attribute(child, "format").value_or("") != "unix") throw Error(ErrorCode::malformed, "serverTime format");
      r.server_time_s = parse_int<std::int64_t>(child.data(), "serverTime");
    } else if (key == "signedTicket") {
      r.signed_ticket = from_base64(child.data());
    } else if (key == "challenge") {
      r.challenge = parse_u64(child.data(), "challenge");
    } else if (key == "package") {
      PackageResponse p;
      p.id = parse_u64(attribute(child, "id").value_or(""), "package id");
      if (auto c = child_text(child, "challenge")) p.challenge = parse_u64(*c, "challenge");
      p.error = child_text(child, "error").value_or(p.challenge ? "" : "no response");
      r.packages.push_back(std::move(p));
    } else if (key == "error") {
      r.error_code = parse_int<int>(attribute(child, "code").value_or("0"), "error code");
      r.error_message = child.data();
    }
  }
  return r;
}

}  // namespace stork
