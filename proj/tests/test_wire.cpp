#include <gtest/gtest.h>

#include "stork/wire.hpp"

using namespace stork;

namespace {

Bytes counting_bytes(std::size_t n) {
  Bytes out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<std::uint8_t>(i);
  return out;
}

Ticket sample_ticket() {
  return {base64_encode(counting_bytes(21)), "1001", 1395820821000, 1395822501000};
}

OnionPackage sample_layer() {
  OnionPackage p;
  p.cryp = {0x01, 0x02};
  p.evkey = {0x03};
  p.url = "https://n";
  p.chal = 5;
  p.p_chal = 6;
  p.snd_d = 1;
  p.clo_d = 2;
  p.rej_d = 3;
  p.update_checksum();
  return p;
}

// same shape as a demo SP listing, with real base64 in place of the elided keys
const char* kListing = R"(<anonymousSurvey>
   <name>surveyForm</name>
   <idSvy>845</idSvy>
   <lang>en</lang>
   <svrUrl>wserv.php</svrUrl>
   <svrAuth></svrAuth>
   <svrSCert>DKE=</svrSCert>
   <svrSExp>AQAB</svrSExp>
   <keepA>true</keepA>
   <rouLen>2</rouLen>
   <bBxUrl>https://sp.example/demoSP/wserv.php</bBxUrl>
   <bBxMod>DKE=</bBxMod>
   <bBxExp>AQAB</bBxExp>
   <endD>1395820821000</endD>
   <cloD>1395822501000</cloD>
   <sButt>sendButton</sButt>
   <areaLog>logarea</areaLog>
   <pause>true</pause>
   <disExt>true</disExt>
</anonymousSurvey>)";

}  // namespace

TEST(Ticket, MessageMatchesReference) {
  EXPECT_EQ(ticket_message(sample_ticket()),
            BigUint("2348578700306824751660766863311394533519894401004419443175015885948687457906743487711540926534310"
                    "839453817992"));
}

TEST(Ticket, Roundtrip) {
  auto t = sample_ticket();
  EXPECT_EQ(decode_ticket(encode(t)), t);
}

TEST(Ticket, Invariants) {
  auto t = sample_ticket();
  t.id_ticket = base64_encode(counting_bytes(20));
  EXPECT_THROW(t.validate(), Error);
  t = sample_ticket();
  t.close_time = t.end_time;
  EXPECT_THROW(t.validate(), Error);
  t = sample_ticket();
  t.id_survey = "abc";
  EXPECT_THROW(t.validate(), Error);
}

TEST(Onion, ChecksumMatchesReference) {
  EXPECT_EQ(to_hex(sample_layer().chk), "b1a244e22d8ff100cb1279b9c3fae8f9");
}

TEST(Onion, RoundtripAndTamperDetection) {
  auto p = sample_layer();
  auto xml = encode(p);
  EXPECT_EQ(decode_onion_package(xml), p);
  p.chal = 7;
  auto tampered = encode(p);  // chk left stale
  try {
    decode_onion_package(tampered);
    FAIL() << "tampered package accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::integrity);
  }
}

TEST(Onion, TimeOrderingEnforced) {
  auto p = sample_layer();
  p.snd_d = 10;
  p.update_checksum();
  EXPECT_THROW(p.validate(), Error);
}

TEST(Onion, ProbeHasNoPayload) {
  OnionPackage p;
  p.p_chal = 9;
  p.update_checksum();
  EXPECT_TRUE(p.is_probe());
  EXPECT_EQ(decode_onion_package(encode(p)), p);
}

TEST(Survey, DecodesDemoListing) {
  auto s = decode_survey_descriptor(kListing);
  EXPECT_EQ(s.name, "surveyForm");
  EXPECT_EQ(s.id_svy, "845");
  EXPECT_EQ(s.svr_s_cert, 3233);
  EXPECT_EQ(s.svr_s_exp, 65537);
  EXPECT_TRUE(s.keep_a);
  EXPECT_EQ(s.rou_len, 2);
  EXPECT_EQ(s.end_d, 1395820821000);
  EXPECT_EQ(s.clo_d, 1395822501000);
  EXPECT_EQ(s.s_butt, "sendButton");
  EXPECT_EQ(s.dis_ext, "true");
  EXPECT_TRUE(s.extras.empty());
  EXPECT_EQ(s.signature_mode(), SignatureMode::raw);
  EXPECT_EQ(decode_survey_descriptor(encode(s)), s);
}

TEST(Survey, WindowBound) {
  auto s = decode_survey_descriptor(kListing);
  // 1680 s available, 840 s required for two hops
  EXPECT_EQ(SurveyDescriptor::min_window_ms(2), 840000);
  s.clo_d = s.end_d;
  try {
    s.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::window_too_short);
  }
  s.clo_d = s.end_d + 840000;
  EXPECT_NO_THROW(s.validate());
  s.clo_d = s.end_d + 839999;
  EXPECT_THROW(s.validate(), Error);
}

TEST(Survey, ZeroCloDIsDerived) {
  auto s = decode_survey_descriptor(kListing);
  s.clo_d = 0;
  EXPECT_EQ(s.effective_clo_d(), s.end_d + 2 * 840000);
}

TEST(Survey, AlternateSpellingsAndExtras) {
  std::string xml = kListing;
  xml.replace(xml.find("svrSCert>"), 9, "srvCert>");
  xml.replace(xml.find("</svrSCert>"), 11, "</srvCert>");
  xml.replace(xml.find("<svrSExp>"), 9, "<SRVeXP>");
  xml.replace(xml.find("</svrSExp>"), 10, "</SRVeXP>");
  xml.insert(xml.find("</anonymousSurvey>"), "<futureThing>x</futureThing>");
  auto s = decode_survey_descriptor(xml);
  EXPECT_EQ(s.svr_s_cert, 3233);
  EXPECT_EQ(s.svr_s_exp, 65537);
  ASSERT_EQ(s.extras.size(), 1u);
  EXPECT_EQ(s.extras[0].first, "futureThing");
  auto again = decode_survey_descriptor(encode(s));
  EXPECT_EQ(again.extras, s.extras);
}

TEST(Survey, WrongRootRejected) {
  try {
    decode_survey_descriptor("<ticket/>");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::unknown_root);
  }
  EXPECT_THROW(decode_survey_descriptor("<anonymousSurvey><name>"), Error);
}

TEST(Timestamp, MillisAndIso) {
  EXPECT_EQ(parse_timestamp("1395820821000"), 1395820821000);
  EXPECT_EQ(parse_timestamp("2014-03-26T08:40:21Z"), 1395823221000);
  EXPECT_EQ(parse_timestamp("2014-03-26T08:40:21.250Z"), 1395823221250);
  EXPECT_EQ(parse_timestamp("2014-03-26T09:40:21+01:00"), 1395823221000);
  EXPECT_THROW(parse_timestamp("yesterday"), Error);
}

TEST(Participation, Roundtrip) {
  Participation p;
  p.p_chal = 42;
  p.ticket = sample_ticket();
  p.signature = counting_bytes(64);
  p.padding = PaddingMode::equalize;
  p.form = to_byte_vector("answer=A&x=<y>");
  EXPECT_EQ(decode_participation(encode(p)), p);
}

TEST(Nodes, ListRoundtrip) {
  std::vector<NodeInfo> nodes{{"https://a/relay", {3233, 17}, 1.0}, {"https://b/relay", {3233, 65537}, 2.5}};
  EXPECT_EQ(decode_node_list(encode_node_list(nodes)), nodes);
  NodeInfo bad{"https://c", {3233, 17}, 0.0};
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Bundle, RoundtripSignVerify) {
  DeterministicRng rng(3);
  auto signer = generate_keypair(512, rng, KeyRole::entity_signing);
  Bundle b;
  b.sealed.push_back({0, {1, 2, 3}, {4, 5}, "https://n1/relay"});
  b.sealed.push_back({1, {6}, {7}, "https://n2/relay"});
  auto signed_bundle = sign_bundle(b, signer, "sp");
  EXPECT_EQ(decode_bundle(encode(signed_bundle)), signed_bundle);

  TrustMap trust{{"sp", signer.public_key()}};
  EXPECT_TRUE(verify_bundle(signed_bundle, trust));
  EXPECT_FALSE(verify_bundle(signed_bundle, TrustMap{}));
  EXPECT_FALSE(verify_bundle(b, trust));

  auto tampered = signed_bundle;
  tampered.sealed[1].payload[0] ^= 1;
  EXPECT_FALSE(verify_bundle(tampered, trust));
  auto reordered = signed_bundle;
  std::swap(reordered.sealed[0], reordered.sealed[1]);
  EXPECT_FALSE(verify_bundle(reordered, trust));
}

TEST(Bundle, EncryptionKeyCannotSign) {
  DeterministicRng rng(4);
  auto enc = generate_keypair(512, rng, KeyRole::encryption);
  EXPECT_THROW(sign_bundle(Bundle{}, enc, "x"), Error);
}

TEST(Form, EncodeDecode) {
  FormRequest f;
  f.set("param", "auth").set("token", "a b&c=d/é").set("idsvy", "999");
  auto body = encode_form(f);
  EXPECT_EQ(body.substr(0, 11), "param=auth&");
  EXPECT_EQ(decode_form(body), f);
  EXPECT_EQ(decode_form("param=auth&token=&idsvy=999").get("idsvy"), "999");
  EXPECT_EQ(decode_form("a=1+2").get("a"), "1 2");
  EXPECT_THROW(decode_form("a=%4"), Error);
  EXPECT_THROW(f.get("missing"), Error);
}

TEST(Responses, ServerTimeInSeconds) {
  auto xml = response_server_time(1395820534000);
  EXPECT_NE(xml.find("<serverTime format=\"unix\">1395820534</serverTime>"), std::string::npos);
  EXPECT_EQ(decode_response(xml).server_time_s, 1395820534);
}

TEST(Responses, Decode) {
  EXPECT_TRUE(decode_response(response_authorised()).authorised);
  EXPECT_EQ(decode_response(response_signed_ticket(BigUint(2790))).signed_ticket, BigUint(2790));
  EXPECT_EQ(decode_response(response_challenge(77)).challenge, 77u);
  std::vector<PackageResponse> pk{{0, 11, ""}, {1, std::nullopt, "transport failure"}};
  EXPECT_EQ(decode_response(response_packages(pk)).packages, pk);
  auto err = decode_response(response_error(ErrorCode::not_authorized, "no <token>"));
  EXPECT_FALSE(err.ok());
  EXPECT_EQ(err.error_code, wire_code(ErrorCode::not_authorized));
  EXPECT_EQ(err.error_message, "no <token>");
}
