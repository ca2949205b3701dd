#include "stork/cli.hpp"

#include <fstream>
#include <memory>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "CLI11.hpp"
#include "stork/client.hpp"
#include "stork/gateway.hpp"
#include "stork/node_relay.hpp"
#include "stork/onion.hpp"
#include "stork/sim.hpp"
#include "stork/sp_service.hpp"

namespace stork {

namespace pt = boost::property_tree;

namespace {

constexpr std::string_view kLocalPeps = "https://peps.local";
constexpr std::string_view kLocalSp = "https://sp.local/wserv.php";

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::invalid_argument, "cannot read " + path.string());
  std::ostringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::invalid_argument, "cannot write " + path.string());
  f << content;
  if (!f) throw Error(ErrorCode::invalid_argument, "cannot write " + path.string());
}

void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty()) {
    out << text;
  } else {
    write_file(path, text);
  }
}

std::unique_ptr<RandomSource> make_rng(const std::optional<std::uint64_t>& seed) {
  if (seed) return std::make_unique<DeterministicRng>(*seed);
  return std::make_unique<OsRng>();
}

std::string format_double(double v) {
  std::ostringstream o;
  o.precision(6);
  o << std::fixed << v;
  return o.str();
}

struct SurveyKeys {
  RsaKeyPair signing;
  RsaKeyPair ballot;
};

std::string encode_survey_keys(const std::string& survey_id, const SurveyKeys& keys) {
  return "<surveyKeys idSvy=\"" + xml_escape(survey_id) + "\"><signing>" + encode_keypair(keys.signing) +
         "</signing><ballot>" + encode_keypair(keys.ballot) + "</ballot></surveyKeys>\n";
}

RsaKeyPair keypair_from(const pt::ptree& node) {
  try {
    auto role = key_role_from_string(node.get<std::string>("<xmlattr>.role"));
    return RsaKeyPair::from_primes(from_base64(node.get<std::string>("p")), from_base64(node.get<std::string>("q")),
                                   from_base64(node.get<std::string>("e")), role);
  } catch (const pt::ptree_error& e) {
    throw Error(ErrorCode::malformed, std::string("keypair: ") + e.what());
  }
}

SurveyKeys decode_survey_keys(std::string_view xml) {
  pt::ptree tree;
  std::istringstream in{std::string(xml)};
  try {
    pt::read_xml(in, tree, pt::xml_parser::no_comments);
    const auto& root = tree.get_child("surveyKeys");
    return {keypair_from(root.get_child("signing.keypair")), keypair_from(root.get_child("ballot.keypair"))};
  } catch (const pt::ptree_error& e) {
    throw Error(ErrorCode::malformed, std::string("survey keys: ") + e.what());
  }
}

/// Nodes, gateway and SP in one process, driven by a manual clock.
class LocalStack final : public ClientTransport {
 public:
  LocalStack(const SurveyDescriptor& survey, SurveyKeys keys, std::size_t node_count, RelayMode policy,
             std::uint64_t seed, ManualClock& clock)
      : rng_(seed), clock_(clock), survey_(survey) {
    RelayPolicy rp = policy == RelayMode::legacy ? RelayPolicy::legacy() : RelayPolicy::hardened();
    for (std::size_t i = 0; i < node_count; ++i) {
      auto url = "https://node" + std::to_string(i) + ".local/relay";
      nodes_.push_back(std::make_unique<NodeRelay>(url, generate_keypair(1024, rng_), rp));
      by_url_[url] = i;
      infos_.push_back(nodes_.back()->info());
    }
    auto entity = generate_keypair(1024, rng_, KeyRole::entity_signing);
    TrustStore trust;
    trust.add("demoSP", entity.public_key());
    gateway_ = std::make_unique<Gateway>(std::move(trust), infos_, [this](const std::string& url,
                                                                          const SealedPackage& s, TimeMs now) {
      return deliver(url, s, now);
    });
    sp_ = std::make_unique<ServiceProvider>(survey.svr_url, std::move(entity), "demoSP",
                                            std::make_shared<DemoAuthorizer>(), gateway_.get(), rng_);
    sp_->import_survey(survey, std::move(keys.signing), std::move(keys.ballot));
  }

  std::string post(const std::string& url, const FormRequest& form) override {
    if (url != survey_.svr_url) throw Error(ErrorCode::transport, "no route to " + url);
    return sp_->handle_request(form, clock_.now());
  }

  std::string get(const std::string& url) override {
    if (!url.starts_with(kLocalPeps)) throw Error(ErrorCode::transport, "no route to " + url);
    return gateway_->handle_get(std::string_view(url).substr(kLocalPeps.size()));
  }

  DeliveryResult deliver(const std::string& url, const SealedPackage& sealed, TimeMs now) {
    if (url == survey_.bbx_url) {
      auto outcome = sp_->receive_ballot(sealed, now);
      if (outcome.challenge) return *outcome.challenge;
      return TransportFailure{};
    }
    auto it = by_url_.find(url);
    if (it == by_url_.end()) return TransportFailure{};
    auto res = nodes_[it->second]->handle_inbound(sealed, now);
    if (res.challenge) return *res.challenge;
    return TransportFailure{};
  }

  /// Ticks every node until the queues empty or `until` passes.
  void drain(TimeMs until, TimeMs cadence) {
    while (clock_.now() <= until) {
      bool busy = false;
      for (auto& node : nodes_) {
        node->expire_queue(clock_.now());
        for (const auto& a : node->process_queue(clock_.now())) {
          node->on_delivery_result(a.entry, deliver(a.url, a.package, clock_.now()), clock_.now());
        }
        busy = busy || node->queue_size() > 0;
      }
      if (!busy) return;
      clock_.advance(cadence);
    }
  }

  ServiceProvider& sp() { return *sp_; }

 private:
  DeterministicRng rng_;
  ManualClock& clock_;
  SurveyDescriptor survey_;
  std::vector<std::unique_ptr<NodeRelay>> nodes_;
  std::map<std::string, std::size_t> by_url_;
  std::vector<NodeInfo> infos_;
  std::unique_ptr<Gateway> gateway_;
  std::unique_ptr<ServiceProvider> sp_;
};

std::filesystem::path keys_path_for(const std::filesystem::path& descriptor) {
  auto p = descriptor;
  p += ".keys";
  return p;
}

// --- subcommands ---------------------------------------------------------------

struct KeygenArgs {
  std::size_t bits = kDefaultKeyBits;
  std::string role = "encryption";
  std::optional<std::uint64_t> seed;
  std::string out;
};

int run_keygen(const KeygenArgs& a, std::ostream& out) {
  auto rng = make_rng(a.seed);
  auto kp = generate_keypair(a.bits, *rng, key_role_from_string(a.role));
  emit(a.out, encode_keypair(kp), out);
  return 0;
}

struct SurveyCreateArgs {
  std::string end_d, clo_d;
  int rou_len = 3;
  std::string options = "A,B";
  std::size_t bits = kDefaultKeyBits;
  std::string name = "survey";
  std::string sig_mode = "raw";
  std::optional<std::uint64_t> seed;
  std::string out;
};

int run_survey_create(const SurveyCreateArgs& a, std::ostream& out) {
  SurveyParams params;
  params.name = a.name;
  params.end_d = parse_timestamp(a.end_d);
  params.clo_d = parse_timestamp(a.clo_d);
  params.rou_len = a.rou_len;
  std::istringstream opts(a.options);
  for (std::string o; std::getline(opts, o, ',');) {
    if (!o.empty()) params.options.push_back(o);
  }
  params.key_bits = a.bits;
  params.sig_mode = signature_mode_from_string(a.sig_mode);

  auto rng = make_rng(a.seed);
  auto entity = generate_keypair(a.bits, *rng, KeyRole::entity_signing);
  ServiceProvider sp(std::string(kLocalSp), std::move(entity), "demoSP", nullptr, nullptr, *rng);
  const auto& rec = sp.create_survey(params);
  auto descriptor = encode(rec.descriptor);
  auto commitment = to_hex(rec.commitment);
  if (a.out.empty()) {
    out << descriptor << "\n";
  } else {
    write_file(a.out, descriptor + "\n");
    write_file(keys_path_for(a.out), encode_survey_keys(rec.survey_id, {rec.signing, rec.ballot}));
    write_file(std::filesystem::path(a.out).concat(".commitment"), commitment + "\n");
  }
  out << "idSvy = " << rec.survey_id << "\n" << "commitment = " << commitment << "\n";
  return 0;
}

struct VoteArgs {
  std::string survey;
  std::string answer;
  std::size_t paths = 3;
  std::string policy = "hardened";
  std::string padding = "none";
  std::string mode = "mixed";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> now;
  std::string state;
  std::string out;
};

int run_vote(const VoteArgs& a, std::ostream& out, std::ostream& err) {
  auto descriptor = decode_survey_descriptor(read_file(a.survey));
  auto keys = decode_survey_keys(read_file(keys_path_for(a.survey)));
  auto policy = relay_mode_from_string(a.policy);
  auto mode = schedule_mode_from_string(a.mode);
  std::uint64_t seed = a.seed.value_or(1);

  TimeMs start = a.now ? parse_timestamp(*a.now) : descriptor.end_d - 60'000;
  ManualClock clock(start);
  std::size_t node_count = std::max<std::size_t>(static_cast<std::size_t>(descriptor.rou_len), a.paths) + 2;
  LocalStack stack(descriptor, std::move(keys), node_count, policy, seed ^ 0x57ac, clock);

  ClientOptions opts;
  opts.token = "cli-voter";
  opts.directory_url = std::string(kLocalPeps) + directory_path(DirectoryFormat::xml);
  opts.published_commitment = window_commitment(descriptor);
  opts.padding.mode = padding_mode_from_string(a.padding);
  if (mode == ScheduleMode::immediate) opts.immediate_delay = descriptor.end_d + kDefaultSafetyMs - start;

  DeterministicRng voter_rng(seed);
  Client client(stack, clock, voter_rng, opts);
  SubmissionReport report;
  try {
    report = client.participate(descriptor, as_bytes(a.answer), a.paths, a.state);
  } catch (const StageError& e) {
    err << "vote aborted at " << to_string(e.stage()) << ": " << e.what() << "\n";
    return 3;
  }
  TimeMs close = descriptor.effective_clo_d();
  stack.drain(close, 30'000);
  auto tally = stack.sp().tally(descriptor.id_svy, std::max(clock.now(), close) + 1);
  bool counted = std::any_of(tally.entries.begin(), tally.entries.end(),
                             [&](const auto& e) { return e.ticket.id_ticket == report.id_ticket; });

  std::ostringstream o;
  o << "survey = " << report.survey_id << "\n"
    << "idTicket = " << report.id_ticket << "\n"
    << "paths = " << a.paths << "\n"
    << "submitted = " << report.routes.size() << "\n"
    << "delivered = " << report.delivered() << "\n";
  for (const auto& r : report.routes) {
    o << "route." << r.route << " = " << r.first_hop << " " << (r.delivered ? "ok" : "failed: " + r.error) << "\n";
  }
  o << "counted = " << (counted ? "yes" : "no") << "\n";
  emit(a.out, o.str(), out);
  return counted ? 0 : 4;
}

struct NodeInspectArgs {
  std::string key;
  std::string package;
  std::string url = "https://node.local/relay";
  std::string out;
};

int run_node_inspect(const NodeInspectArgs& a, std::ostream& out) {
  auto kp = decode_keypair(read_file(a.key));
  std::ostringstream o;
  o << encode(NodeInfo{a.url, kp.public_key(), 1.0}) << "\n";
  if (!a.package.empty()) {
    auto layer = peel_layer(decode_sealed_package(read_file(a.package)), kp);
    o << "probe = " << (layer.is_probe() ? "yes" : "no") << "\n"
      << "url = " << layer.url << "\n"
      << "chal = " << layer.chal << "\n"
      << "pChal = " << layer.p_chal << "\n"
      << "sndD = " << layer.snd_d << "\n"
      << "cloD = " << layer.clo_d << "\n"
      << "rejD = " << layer.rej_d << "\n"
      << "inner bytes = " << layer.cryp.size() << "\n";
  }
  emit(a.out, o.str(), out);
  return 0;
}

struct ScenarioArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> policy, padding, mode;
  std::string out;
};

int run_scenario_cmd(const ScenarioArgs& a, std::ostream& out) {
  auto text = read_file(a.config);
  auto config = SimConfig::parse(text);
  if (a.seed) config.seed = *a.seed;
  if (a.policy) config.policy = relay_mode_from_string(*a.policy);
  if (a.padding) config.padding = padding_mode_from_string(*a.padding);
  if (a.mode) config.mode = schedule_mode_from_string(*a.mode);
  config.validate();

  pt::ptree tree;
  std::istringstream in(text);
  pt::read_ini(in, tree);
  pt::ptree section;
  if (auto found = tree.get_child_optional("scenario")) section = *found;
  auto kind = section.get<std::string>("kind", "run");

  std::ostringstream o;
  o << "# stork scenario report\n" << "kind = " << kind << "\n" << config.to_ini();
  std::optional<ObservationLog> log;
  std::string csv;

  if (kind == "run" || kind == "length") {
    auto r = run_scenario(config);
    o << render_report(r) << "timing_link_accuracy = " << format_double(timing_link_attack(r.log)) << "\n";
    if (kind == "length") {
      auto l = length_profile_attack(r.log, config.options);
      o << "length.accuracy = " << format_double(l.accuracy) << "\n"
        << "length.threshold = " << format_double(l.threshold) << "\n"
        << "length.observations = " << l.observations << "\n"
        << "length.degenerate = " << (l.degenerate ? "yes" : "no") << "\n";
    }
    log = r.log;
  } else if (kind == "timing") {
    auto seeds = section.get<std::size_t>("seeds", 1);
    double sum = 0;
    csv = "seed,accuracy\n";
    for (std::size_t i = 0; i < seeds; ++i) {
      auto c = config;
      c.seed = config.seed + i;
      auto r = run_scenario(c);
      double acc = timing_link_attack(r.log);
      sum += acc;
      o << "timing.seed." << c.seed << " = " << format_double(acc) << "\n";
      csv += std::to_string(c.seed) + "," + format_double(acc) + "\n";
      if (i == 0) log = r.log;
    }
    o << "timing.mean = " << format_double(sum / static_cast<double>(seeds)) << "\n";
  } else if (kind == "clod_split") {
    auto count = section.get<std::size_t>("victims", 5);
    auto shift = section.get<TimeMs>("shift_s", (config.frame + 3'600'000) / 1000) * 1000;
    if (count == 0 || count >= config.voters) throw Error(ErrorCode::invalid_argument, "victims out of range");
    std::vector<std::size_t> victims;
    for (std::size_t j = 0; j < count; ++j) victims.push_back(j * config.voters / count);
    for (bool check : {false, true}) {
      auto r = clod_split_scenario(config, victims, shift, check);
      std::string p = check ? "checked." : "unchecked.";
      o << p << "identified = " << r.identified << "\n"
        << p << "accuracy = " << format_double(r.accuracy) << "\n"
        << p << "aborted = " << r.aborted.size() << "\n"
        << p << "tallied = " << r.tallied << "\n";
      if (!check) log = r.run.log;
    }
  } else if (kind == "bomb") {
    auto bombs = section.get<std::size_t>("bombs", 100);
    auto target = section.get<std::size_t>("target", 0);
    auto r = challenge_bomb_scenario(config, bombs, target);
    o << render_report(r.run) << "bomb.target = " << r.target << "\n"
      << "bomb.count = " << r.bombs << "\n"
      << "bomb.relayed_upstream = " << r.upstream_relayed << "\n"
      << "bomb.at_horizon = " << r.at_horizon << "\n"
      << "bomb.min_after_injection = " << r.min_after_injection << "\n"
      << "bomb.first_attempt = " << (r.first_attempt ? std::to_string(*r.first_attempt) : "none") << "\n"
      << "bomb.drained_at = " << (r.drained_at ? std::to_string(*r.drained_at) : "never") << "\n";
    csv = "time_ms,bomb_entries\n";
    for (const auto& [t, n] : r.series) csv += std::to_string(t) + "," + std::to_string(n) + "\n";
    log = r.run.log;
  } else {
    throw Error(ErrorCode::invalid_argument, "unknown scenario kind '" + kind + "'");
  }

  emit(a.out, o.str(), out);
  if (!a.out.empty()) {
    if (log) write_file(a.out + ".log", log->serialize());
    if (!csv.empty()) write_file(a.out + ".csv", csv);
  }
  return 0;
}

struct ReportArgs {
  std::string log;
  std::string out;
};

int run_report(const ReportArgs& a, std::ostream& out) {
  emit(a.out, summarize_log(ObservationLog::parse(read_file(a.log))), out);
  return 0;
}

}  // namespace

std::string encode_keypair(const RsaKeyPair& kp) {
  return "<keypair role=\"" + std::string(to_string(kp.role())) + "\" bits=\"" + std::to_string(kp.bit_length()) +
         "\"><p>" + to_base64(kp.prime_p()) + "</p><q>" + to_base64(kp.prime_q()) + "</q><e>" +
         to_base64(kp.public_exponent()) + "</e></keypair>\n";
}

RsaKeyPair decode_keypair(std::string_view xml) {
  pt::ptree tree;
  std::istringstream in{std::string(xml)};
  try {
    pt::read_xml(in, tree, pt::xml_parser::no_comments);
  } catch (const pt::ptree_error& e) {
    throw Error(ErrorCode::malformed, std::string("keypair: ") + e.what());
  }
  auto root = tree.get_child_optional("keypair");
  if (!root) throw Error(ErrorCode::malformed, "keypair: missing root");
  return keypair_from(*root);
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"STORK anonymous survey toolkit", "stork-cli"};
  app.require_subcommand(1);

  KeygenArgs keygen;
  auto* k = app.add_subcommand("keygen", "generate an RSA keypair document");
  k->add_option("--bits", keygen.bits)->check(CLI::IsMember({512, 1024, 2048, 4096}));
  k->add_option("--role", keygen.role)->check(CLI::IsMember({"ticket-signing", "encryption", "entity-signing"}));
  k->add_option("--seed", keygen.seed);
  k->add_option("--out", keygen.out);

  SurveyCreateArgs create;
  auto* s = app.add_subcommand("survey-create", "create a survey: descriptor, keys and commitment");
  s->add_option("--endD", create.end_d)->required();
  s->add_option("--cloD", create.clo_d)->required();
  s->add_option("--rou-len", create.rou_len)->check(CLI::Range(0, 6));
  s->add_option("--options", create.options);
  s->add_option("--bits", create.bits)->check(CLI::IsMember({512, 1024, 2048, 4096}));
  s->add_option("--name", create.name);
  s->add_option("--sig-mode", create.sig_mode)->check(CLI::IsMember({"raw", "hash"}));
  s->add_option("--seed", create.seed);
  s->add_option("--out", create.out);

  VoteArgs vote;
  auto* v = app.add_subcommand("vote", "vote once against an in-process SP, gateway and nodes");
  v->add_option("--survey", vote.survey)->required();
  v->add_option("--answer", vote.answer)->required();
  v->add_option("--paths", vote.paths)->check(CLI::Range(1, 16));
  v->add_option("--policy", vote.policy)->check(CLI::IsMember({"legacy", "hardened"}));
  v->add_option("--padding", vote.padding)->check(CLI::IsMember({"none", "random", "equalize"}));
  v->add_option("--mode", vote.mode)->check(CLI::IsMember({"mixed", "immediate"}));
  v->add_option("--seed", vote.seed);
  v->add_option("--now", vote.now, "clock start (ms or ISO-8601)");
  v->add_option("--state", vote.state, "participation state file");
  v->add_option("--out", vote.out);

  NodeInspectArgs inspect;
  auto* n = app.add_subcommand("node-inspect", "show a node entry and optionally peel one package");
  n->add_option("--key", inspect.key)->required();
  n->add_option("--package", inspect.package);
  n->add_option("--url", inspect.url);
  n->add_option("--out", inspect.out);

  ScenarioArgs scenario;
  auto* sc = app.add_subcommand("scenario", "run a simulation scenario");
  sc->add_option("--config", scenario.config)->required();
  sc->add_option("--seed", scenario.seed);
  sc->add_option("--policy", scenario.policy)->check(CLI::IsMember({"legacy", "hardened"}));
  sc->add_option("--padding", scenario.padding)->check(CLI::IsMember({"none", "random", "equalize"}));
  sc->add_option("--mode", scenario.mode)->check(CLI::IsMember({"mixed", "immediate"}));
  sc->add_option("--out", scenario.out);

  ReportArgs report;
  auto* r = app.add_subcommand("report", "summarize an observation log");
  r->add_option("--log", report.log)->required();
  r->add_option("--out", report.out);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*k) return run_keygen(keygen, out);
    if (*s) return run_survey_create(create, out);
    if (*v) return run_vote(vote, out, err);
    if (*n) return run_node_inspect(inspect, out);
    if (*sc) return run_scenario_cmd(scenario, out);
    if (*r) return run_report(report, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  err << app.help();
  return 1;
}

}  // namespace stork
