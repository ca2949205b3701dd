#include "stork/client.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "stork/sp_service.hpp"

namespace stork {

namespace pt = boost::property_tree;

TimeMs SystemClock::now() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

void SystemClock::sleep_until(TimeMs t) {
  auto dt = t - now();
  if (dt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(dt));
}

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::source: return "source";
    case Stage::commitment: return "commitment";
    case Stage::auth: return "auth";
    case Stage::time_sync: return "time_sync";
    case Stage::directory: return "directory";
    case Stage::routes: return "routes";
    case Stage::probes: return "probes";
    case Stage::ticket: return "ticket";
    case Stage::sign: return "sign";
    case Stage::verify: return "verify";
    case Stage::onion: return "onion";
    case Stage::submit: return "submit";
  }
  return "unknown";
}

StageError::StageError(Stage stage, ErrorCode code, const std::string& message)
    : Error(code, std::string(to_string(stage)) + ": " + message), stage_(stage) {}

std::string_view to_string(PlanState state) {
  switch (state) {
    case PlanState::init: return "init";
    case PlanState::probed: return "probed";
    case PlanState::signed_: return "signed";
    case PlanState::submitted: return "submitted";
  }
  return "unknown";
}

namespace {

PlanState plan_state_from_string(std::string_view s) {
  if (s == "init") return PlanState::init;
  if (s == "probed") return PlanState::probed;
  if (s == "signed") return PlanState::signed_;
  if (s == "submitted") return PlanState::submitted;
  throw Error(ErrorCode::malformed, "unknown plan state '" + std::string(s) + "'");
}

bool is_https(std::string_view url) { return url.starts_with("https://"); }

}  // namespace

Ticket generate_ticket(const SurveyDescriptor& survey, RandomSource& rng) {
  Ticket t;
  t.id_ticket = base64_encode(rng.bytes(kTicketIdBytes));
  t.id_survey = survey.id_svy;
  t.end_time = survey.end_d;
  t.close_time = survey.effective_clo_d();
  return t;
}

bool verify_window_commitment(const SurveyDescriptor& survey, const Sha256Digest& published) {
  return window_commitment(survey) == published;
}

std::vector<std::vector<NodeInfo>> select_routes(std::span<const NodeInfo> nodes, std::size_t rou_len, std::size_t k,
                                                 RandomSource& rng) {
  if (rou_len > nodes.size()) throw Error(ErrorCode::insufficient_nodes, "route longer than the node directory");
  std::vector<std::vector<NodeInfo>> routes;
  if (rou_len == 0) return std::vector<std::vector<NodeInfo>>(k);
  std::vector<std::string> used_first;
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<NodeInfo> fresh;
    for (const auto& n : nodes) {
      if (std::find(used_first.begin(), used_first.end(), n.url) == used_first.end()) fresh.push_back(n);
    }
    if (fresh.empty()) fresh.assign(nodes.begin(), nodes.end());
    auto first = pick_route(fresh, 1, rng).front();
    std::vector<NodeInfo> rest;
    for (const auto& n : nodes) {
      if (n.url != first.url) rest.push_back(n);
    }
    auto route = pick_route(rest, rou_len - 1, rng);
    route.insert(route.begin(), first);
    used_first.push_back(first.url);
    routes.push_back(std::move(route));
  }
  return routes;
}

void probe_first_hops(ParticipationPlan& plan, ClientTransport& transport, const std::string& token,
                      RandomSource& rng) {
  if (plan.state != PlanState::init) throw Error(ErrorCode::invariant, "routes already probed");
  Bundle bundle;
  std::vector<std::uint64_t> expected(plan.routes.size());
  for (std::size_t i = 0; i < plan.routes.size(); ++i) {
    if (plan.routes[i].hops.empty()) continue;
    auto probe = build_challenge_probe(plan.routes[i].hops.front(), rng);
    probe.package.id = i;
    expected[i] = probe.expected;
    bundle.sealed.push_back(std::move(probe.package));
  }
  if (bundle.sealed.empty()) {
    plan.state = PlanState::probed;
    return;
  }
  FormRequest form;
  form.set("param", "proxy").set("token", token).set("idsvy", plan.survey.id_svy).set("bundle", encode(bundle));
  auto response = decode_response(transport.post(plan.survey.svr_url, form));
  if (!response.ok()) throw Error(ErrorCode::transport, "probe bundle refused: " + response.error_message);

  std::vector<bool> alive(plan.routes.size(), false);
  for (std::size_t i = 0; i < plan.routes.size(); ++i) alive[i] = plan.routes[i].hops.empty();
  for (const auto& r : response.packages) {
    if (r.id < alive.size() && r.challenge && *r.challenge == expected[r.id]) alive[r.id] = true;
  }
  std::vector<Route> kept;
  for (std::size_t i = 0; i < plan.routes.size(); ++i) {
    if (alive[i]) kept.push_back(std::move(plan.routes[i]));
  }
  if (kept.empty()) throw Error(ErrorCode::aborted, "no first hop answered its challenge; try again later");
  plan.routes = std::move(kept);
  plan.state = PlanState::probed;
}

std::size_t SubmissionReport::delivered() const {
  return static_cast<std::size_t>(std::count_if(routes.begin(), routes.end(), [](const auto& r) { return r.delivered; }));
}

void save_state(const std::filesystem::path& path, const PersistedState& s) {
  if (path.empty()) return;
  std::ostringstream out;
  out << "<participationState state=\"" << to_string(s.state) << "\" idSvy=\"" << xml_escape(s.survey_id) << "\">"
      << "<idTicket>" << xml_escape(s.ticket.id_ticket) << "</idTicket>"
      << "<idSurvey>" << xml_escape(s.ticket.id_survey) << "</idSurvey>"
      << "<endTime>" << s.ticket.end_time << "</endTime>"
      << "<closeTime>" << s.ticket.close_time << "</closeTime>"
      << "<blinding>" << to_base64(s.r) << "</blinding>";
  if (s.signature) out << "<signature>" << to_base64(*s.signature) << "</signature>";
  if (s.weak_seed) out << "<weakSeed>" << *s.weak_seed << "</weakSeed>";
  out << "</participationState>\n";

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorCode::invalid_argument, "cannot write " + tmp.string());
    f << out.str();
    f.flush();
    if (!f) throw Error(ErrorCode::invalid_argument, "cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::optional<PersistedState> load_state(const std::filesystem::path& path) {
  if (path.empty()) return std::nullopt;
  std::ifstream f(path, std::ios::binary);
  if (!f) return std::nullopt;
  pt::ptree tree;
  try {
    pt::read_xml(f, tree, pt::xml_parser::no_comments);
    const auto& root = tree.get_child("participationState");
    PersistedState s;
    s.state = plan_state_from_string(root.get<std::string>("<xmlattr>.state"));
    s.survey_id = root.get<std::string>("<xmlattr>.idSvy");
    s.ticket.id_ticket = root.get<std::string>("idTicket");
    s.ticket.id_survey = root.get<std::string>("idSurvey");
    s.ticket.end_time = root.get<TimeMs>("endTime");
    s.ticket.close_time = root.get<TimeMs>("closeTime");
    s.r = from_base64(root.get<std::string>("blinding"));
    if (auto sig = root.get_optional<std::string>("signature")) s.signature = from_base64(*sig);
    if (auto seed = root.get_optional<std::int64_t>("weakSeed")) s.weak_seed = *seed;
    return s;
  } catch (const pt::ptree_error& e) {
    throw Error(ErrorCode::malformed, std::string("participation state: ") + e.what());
  }
}

Client::Client(ClientTransport& transport, Clock& clock, RandomSource& rng, ClientOptions options)
    : transport_(transport), clock_(clock), rng_(rng), options_(std::move(options)) {}

void Client::checkpoint(Stage stage) const {
  if (options_.abort_after == stage) throw StageError(stage, ErrorCode::aborted, "stopped by request");
}

std::string Client::sp_call(Stage stage, const SurveyDescriptor& survey, FormRequest form) {
  try {
    return transport_.post(survey.svr_url, form);
  } catch (const Error& e) {
    throw StageError(stage, e.code(), e.what());
  }
}

ParticipationPlan Client::prepare(const SurveyDescriptor& survey, ByteView answer, std::size_t k,
                                  const std::filesystem::path& state_path, std::vector<PreparedBundle>& bundles) {
  if (k == 0) throw Error(ErrorCode::invalid_argument, "at least one path is needed");
  ParticipationPlan plan;
  plan.survey = survey;

  if (options_.source_policy == SourcePolicy::strict) {
    for (const std::string* url : std::initializer_list<const std::string*>{&options_.directory_url, &options_.descriptor_url, &survey.svr_url}) {
      if (!url->empty() && !is_https(*url)) {
        throw StageError(Stage::source, ErrorCode::policy,
                         "critical data was retrieved through an unsecured channel: " + *url);
      }
    }
    if (options_.directory_url.empty()) throw StageError(Stage::source, ErrorCode::policy, "no directory source");
  }
  checkpoint(Stage::source);

  if (options_.check_commitment) {
    if (!options_.published_commitment) {
      throw StageError(Stage::commitment, ErrorCode::policy, "no published window commitment");
    }
    if (!verify_window_commitment(survey, *options_.published_commitment)) {
      throw StageError(Stage::commitment, ErrorCode::integrity, "survey window does not match its commitment");
    }
  }
  checkpoint(Stage::commitment);

  FormRequest auth;
  auth.set("param", "auth").set("token", options_.token).set("idsvy", survey.id_svy);
  auto auth_doc = decode_response(sp_call(Stage::auth, survey, auth));
  if (!auth_doc.authorised) throw StageError(Stage::auth, ErrorCode::not_authorized, auth_doc.error_message);
  checkpoint(Stage::auth);

  FormRequest date;
  date.set("param", "date");
  auto date_doc = decode_response(sp_call(Stage::time_sync, survey, date));
  if (!date_doc.server_time_s) throw StageError(Stage::time_sync, ErrorCode::malformed, "no serverTime");
  plan.clock_offset = *date_doc.server_time_s * 1000 - clock_.now();
  checkpoint(Stage::time_sync);

  std::vector<NodeInfo> nodes;
  try {
    auto doc = transport_.get(options_.directory_url);
    nodes = doc.starts_with("<") ? decode_node_list(doc) : decode_node_directory_json(doc);
  } catch (const Error& e) {
    throw StageError(Stage::directory, e.code(), e.what());
  }
  checkpoint(Stage::directory);

  TimeMs server_now = clock_.now() + plan.clock_offset;
  try {
    auto paths = select_routes(nodes, static_cast<std::size_t>(survey.rou_len), k, rng_);
    for (auto& hops : paths) {
      Route r;
      r.hops = std::move(hops);
      r.ballot_box = {survey.bbx_url, survey.ballot_box_key()};
      if (options_.immediate_delay) {
        r.schedule.assign(r.hops.size() + 1, server_now + *options_.immediate_delay);
      } else {
        r.schedule = schedule_deliveries(server_now, survey.end_d, survey.effective_clo_d(), options_.safety,
                                         options_.tolerance, r.hops.size(), rng_);
      }
      r.challenges = make_challenges(r.hops.size() + 1, rng_);
      plan.routes.push_back(std::move(r));
    }
  } catch (const Error& e) {
    throw StageError(Stage::routes, e.code(), e.what());
  }
  checkpoint(Stage::routes);

  try {
    probe_first_hops(plan, transport_, options_.token, rng_);
  } catch (const Error& e) {
    throw StageError(Stage::probes, e.code(), e.what());
  }
  checkpoint(Stage::probes);

  const auto pub = survey.signing_key();
  const auto mode = survey.signature_mode();
  auto saved = load_state(state_path);
  if (saved && saved->survey_id == survey.id_svy) {
    plan.ticket = saved->ticket;
    plan.blinding = BlindingFactor::from(saved->r, pub);
    plan.weak_seed = saved->weak_seed;
    plan.resumed = true;
  } else {
    plan.ticket = generate_ticket(survey, rng_);
    if (options_.weak_fingerprint) {
      WeakPrngState weak{clock_.now(), *options_.weak_fingerprint, 0};
      plan.blinding = BlindingFactor::from(weak_opacity_factor(weak), pub);
      plan.weak_seed = weak.seed_ms;
    } else {
      plan.blinding = make_blinding_factor(pub, rng_);
    }
    save_state(state_path, {survey.id_svy, PlanState::probed, plan.ticket, plan.blinding.r, std::nullopt,
                            plan.weak_seed});
  }
  auto message = ticket_message(plan.ticket);
  plan.opct = blind(message_representative(message, pub, mode), plan.blinding, pub);
  checkpoint(Stage::ticket);

  FormRequest sign;
  sign.set("param", "ssign").set("token", options_.token).set("idsvy", survey.id_svy).set("opct", to_base64(plan.opct));
  auto sign_doc = decode_response(sp_call(Stage::sign, survey, sign));
  if (!sign_doc.signed_ticket) {
    throw StageError(Stage::sign, ErrorCode::not_authorized, "blind signature refused: " + sign_doc.error_message);
  }
  checkpoint(Stage::sign);

  auto signature = unblind(*sign_doc.signed_ticket, plan.blinding, pub);
  if (!verify_signature(message, signature, pub, mode)) {
    throw StageError(Stage::verify, ErrorCode::integrity, "unblinded signature does not verify");
  }
  plan.signature = signature;
  plan.state = PlanState::signed_;
  save_state(state_path, {survey.id_svy, PlanState::signed_, plan.ticket, plan.blinding.r, signature, plan.weak_seed});
  checkpoint(Stage::verify);

  std::vector<std::size_t> option_lengths;
  for (const auto& o : survey.options) option_lengths.push_back(o.size());
  try {
    for (std::size_t i = 0; i < plan.routes.size(); ++i) {
      const auto& route = plan.routes[i];
      auto padded = pad_payload(answer, options_.padding, option_lengths, rng_);
      auto sealed = build_onion(plan.ticket, signature, padded, options_.padding.mode, route, survey,
                                options_.reject_time, rng_);
      sealed.id = i;
      PreparedBundle b;
      b.route = i;
      b.submit_at = route.schedule.front();
      b.bundle.sealed.push_back(std::move(sealed));
      b.expected_challenge = route.challenges.front();
      bundles.push_back(std::move(b));
    }
  } catch (const Error& e) {
    throw StageError(Stage::onion, e.code(), e.what());
  }
  checkpoint(Stage::onion);
  return plan;
}

RouteStatus Client::submit(const PreparedBundle& prepared, const ParticipationPlan& plan) {
  RouteStatus status;
  status.route = prepared.route;
  const auto& route = plan.routes.at(prepared.route);
  status.first_hop = route.hops.empty() ? route.ballot_box.url : route.hops.front().url;
  status.submitted_at = clock_.now() + plan.clock_offset;
  FormRequest form;
  form.set("param", "proxy")
      .set("token", options_.token)
      .set("idsvy", plan.survey.id_svy)
      .set("bundle", encode(prepared.bundle));
  try {
    auto doc = decode_response(transport_.post(plan.survey.svr_url, form));
    if (!doc.ok()) {
      status.error = doc.error_message;
    } else if (doc.packages.size() != 1) {
      status.error = "unexpected response";
    } else if (doc.packages[0].challenge != prepared.expected_challenge) {
      status.error = doc.packages[0].error.empty() ? "wrong challenge" : doc.packages[0].error;
    } else {
      status.delivered = true;
    }
  } catch (const Error& e) {
    status.error = e.what();
  }
  return status;
}

void Client::finish(ParticipationPlan& plan, const std::filesystem::path& state_path) {
  plan.state = PlanState::submitted;
  save_state(state_path,
             {plan.survey.id_svy, PlanState::submitted, plan.ticket, plan.blinding.r, plan.signature, plan.weak_seed});
}

SubmissionReport Client::participate(const SurveyDescriptor& survey, ByteView answer, std::size_t k,
                                     const std::filesystem::path& state_path) {
  std::vector<PreparedBundle> bundles;
  auto plan = prepare(survey, answer, k, state_path, bundles);
  std::stable_sort(bundles.begin(), bundles.end(),
                   [](const auto& a, const auto& b) { return a.submit_at < b.submit_at; });
  SubmissionReport report;
  report.survey_id = survey.id_svy;
  report.id_ticket = plan.ticket.id_ticket;
  report.resumed = plan.resumed;
  for (const auto& b : bundles) {
    clock_.sleep_until(b.submit_at - plan.clock_offset);
    report.routes.push_back(submit(b, plan));
  }
  std::sort(report.routes.begin(), report.routes.end(), [](const auto& a, const auto& b) { return a.route < b.route; });
  finish(plan, state_path);
  return report;
}

}  // namespace stork
