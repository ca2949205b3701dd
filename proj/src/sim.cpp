#include "stork/sim.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace stork {

namespace pt = boost::property_tree;

std::string_view to_string(ScheduleMode mode) { return mode == ScheduleMode::mixed ? "mixed" : "immediate"; }

ScheduleMode schedule_mode_from_string(std::string_view text) {
  if (text == "mixed") return ScheduleMode::mixed;
  if (text == "immediate") return ScheduleMode::immediate;
  throw Error(ErrorCode::invalid_argument, "unknown scheduling mode '" + std::string(text) + "'");
}

// --- config --------------------------------------------------------------------

void SimConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::invalid_argument, what); };
  if (voters == 0) fail("voters must be positive");
  if (paths == 0) fail("paths must be positive");
  if (rou_len < 0 || rou_len > 6) fail("rou_len must be in [0, 6]");
  if (nodes < static_cast<std::size_t>(rou_len)) fail("fewer nodes than rou_len");
  if (!node_weights.empty() && node_weights.size() != nodes) fail("node_weights must list one weight per node");
  for (double w : node_weights) {
    if (!(w > 0)) fail("node weights must be positive");
  }
  if (signing_period <= 0 || frame <= 0 || safety <= 0 || tolerance <= 0 || reject_time <= 0 || cadence <= 0 ||
      horizon_after_clod <= 0 || immediate_spacing <= 0) {
    fail("all durations must be positive");
  }
  if (cadence >= tolerance) fail("cadence must be below tolerance");
  if (frame < SurveyDescriptor::min_window_ms(rou_len)) fail("frame shorter than (600 + rou_len*120) s");
  if (safety + tolerance >= frame) fail("safety + tolerance leave no delivery frame");
  if (latency_min < 0 || latency_max < latency_min) fail("bad latency range");
  if (!(loss >= 0.0 && loss < 1.0)) fail("loss must be in [0, 1)");
  if (options.empty()) fail("at least one option");
  if (mode == ScheduleMode::immediate) {
    if (static_cast<TimeMs>(voters - 1) * immediate_spacing >= signing_period) {
      fail("immediate mode: voters do not fit in the signing period");
    }
    if (static_cast<TimeMs>(voters - 1) * immediate_spacing + safety + (rou_len + 1) * cadence >=
        frame - tolerance) {
      fail("immediate mode: deliveries do not fit in the frame");
    }
  }
}

namespace {

const std::vector<std::string> kConfigKeys = {
    "seed",     "voters",           "nodes",           "node_weights",    "rou_len",          "paths",
    "start_ms", "signing_period_s", "frame_s",         "safety_s",        "tolerance_s",      "reject_time_s",
    "horizon_after_clod_s",         "policy",          "padding",         "mode",             "immediate_spacing_s",
    "latency_min_ms",               "latency_max_ms",  "loss",            "cadence_s",        "key_bits",
    "options",  "sig_mode",         "check_commitment"};

template <typename T>
T number(const std::string& key, const std::string& text) {
  T value{};
  auto trimmed = boost::algorithm::trim_copy(text);
  auto [ptr, ec] = std::from_chars(trimmed.data(), trimmed.data() + trimmed.size(), value);
  if (ec != std::errc{} || ptr != trimmed.data() + trimmed.size()) {
    throw Error(ErrorCode::invalid_argument, "config key " + key + ": not a number: '" + text + "'");
  }
  return value;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> parts;
  boost::algorithm::split(parts, text, boost::is_any_of(","));
  for (auto& p : parts) boost::algorithm::trim(p);
  parts.erase(std::remove(parts.begin(), parts.end(), std::string{}), parts.end());
  return parts;
}

bool boolean(const std::string& key, const std::string& text) {
  auto t = boost::algorithm::to_lower_copy(boost::algorithm::trim_copy(text));
  if (t == "true" || t == "yes" || t == "1" || t == "on") return true;
  if (t == "false" || t == "no" || t == "0" || t == "off") return false;
  throw Error(ErrorCode::invalid_argument, "config key " + key + ": not a boolean: '" + text + "'");
}

std::string join(const std::vector<std::string>& parts) { return boost::algorithm::join(parts, ","); }

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

SimConfig SimConfig::parse(std::string_view text) {
  pt::ptree tree;
  try {
    std::istringstream in{std::string(text)};
    pt::read_ini(in, tree);
  } catch (const pt::ptree_error& e) {
    throw Error(ErrorCode::invalid_argument, std::string("scenario config: ") + e.what());
  }
  std::map<std::string, std::string> kv;
  for (const auto& [key, child] : tree) {
    if (child.empty()) {
      kv[key] = child.data();
    } else if (key == "sim") {
      for (const auto& [k, v] : child) kv[k] = v.data();
    }
  }

  SimConfig c;
  for (const auto& [key, value] : kv) {
    if (std::find(kConfigKeys.begin(), kConfigKeys.end(), key) == kConfigKeys.end()) {
      throw Error(ErrorCode::invalid_argument, "unknown config key '" + key + "'");
    }
    auto seconds = [&] { return number<TimeMs>(key, value) * 1000; };
    if (key == "seed") c.seed = number<std::uint64_t>(key, value);
    else if (key == "voters") c.voters = number<std::size_t>(key, value);
    else if (key == "nodes") c.nodes = number<std::size_t>(key, value);
    else if (key == "node_weights") {
      c.node_weights.clear();
      for (const auto& w : split_list(value)) c.node_weights.push_back(number<double>(key, w));
    } else if (key == "rou_len") c.rou_len = number<int>(key, value);
    else if (key == "paths") c.paths = number<std::size_t>(key, value);
    else if (key == "start_ms") c.start = number<TimeMs>(key, value);
    else if (key == "signing_period_s") c.signing_period = seconds();
    else if (key == "frame_s") c.frame = seconds();
    else if (key == "safety_s") c.safety = seconds();
    else if (key == "tolerance_s") c.tolerance = seconds();
    else if (key == "reject_time_s") c.reject_time = seconds();
    else if (key == "horizon_after_clod_s") c.horizon_after_clod = seconds();
    else if (key == "policy") c.policy = relay_mode_from_string(boost::algorithm::trim_copy(value));
    else if (key == "padding") c.padding = padding_mode_from_string(boost::algorithm::trim_copy(value));
    else if (key == "mode") c.mode = schedule_mode_from_string(boost::algorithm::trim_copy(value));
    else if (key == "immediate_spacing_s") c.immediate_spacing = seconds();
    else if (key == "latency_min_ms") c.latency_min = number<TimeMs>(key, value);
    else if (key == "latency_max_ms") c.latency_max = number<TimeMs>(key, value);
    else if (key == "loss") c.loss = number<double>(key, value);
    else if (key == "cadence_s") c.cadence = seconds();
    else if (key == "key_bits") c.key_bits = number<std::size_t>(key, value);
    else if (key == "options") c.options = split_list(value);
    else if (key == "sig_mode") c.sig_mode = signature_mode_from_string(boost::algorithm::trim_copy(value));
    else if (key == "check_commitment") c.check_commitment = boolean(key, value);
  }
  c.validate();
  return c;
}

SimConfig SimConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::invalid_argument, "cannot read " + path.string());
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse(buf.str());
}

std::string SimConfig::to_ini() const {
  std::ostringstream o;
  o << "seed = " << seed << "\n"
    << "voters = " << voters << "\n"
    << "nodes = " << nodes << "\n";
  if (!node_weights.empty()) {
    std::vector<std::string> ws;
    for (double w : node_weights) ws.push_back(format_double(w));
    o << "node_weights = " << join(ws) << "\n";
  }
  o << "rou_len = " << rou_len << "\n"
    << "paths = " << paths << "\n"
    << "start_ms = " << start << "\n"
    << "signing_period_s = " << signing_period / 1000 << "\n"
    << "frame_s = " << frame / 1000 << "\n"
    << "safety_s = " << safety / 1000 << "\n"
    << "tolerance_s = " << tolerance / 1000 << "\n"
    << "reject_time_s = " << reject_time / 1000 << "\n"
    << "horizon_after_clod_s = " << horizon_after_clod / 1000 << "\n"
    << "policy = " << to_string(policy) << "\n"
    << "padding = " << to_string(padding) << "\n"
    << "mode = " << to_string(mode) << "\n"
    << "immediate_spacing_s = " << immediate_spacing / 1000 << "\n"
    << "latency_min_ms = " << latency_min << "\n"
    << "latency_max_ms = " << latency_max << "\n"
    << "loss = " << format_double(loss) << "\n"
    << "cadence_s = " << cadence / 1000 << "\n"
    << "key_bits = " << key_bits << "\n"
    << "options = " << join(options) << "\n"
    << "sig_mode = " << to_string(sig_mode) << "\n"
    << "check_commitment = " << (check_commitment ? "true" : "false") << "\n";
  return o.str();
}

// --- observation log -------------------------------------------------------------

std::string ObservationLog::serialize() const {
  std::ostringstream o;
  o << "# stork observation log v1\n";
  for (const auto& s : signs) o << "sign," << s.voter << "," << s.at << "\n";
  for (const auto& a : arrivals) {
    o << "arrival," << a.id_ticket << "," << a.at << "," << to_string(a.verdict) << "," << a.reason << "\n";
  }
  for (const auto& q : queues) o << "queue," << q.node << "," << q.at << "," << q.size << "\n";
  for (const auto& s : sizes) o << "size," << s.voter << "," << s.route << "," << s.bytes << "\n";
  for (const auto& t : truth) {
    o << "truth," << t.voter << "," << t.id_ticket << "," << t.option << "," << t.abort_stage << "\n";
  }
  return o.str();
}

ObservationLog ObservationLog::parse(std::string_view text) {
  ObservationLog log;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> f;
    boost::algorithm::split(f, line, boost::is_any_of(","));
    auto need = [&](std::size_t n) {
      if (f.size() != n) {
        throw Error(ErrorCode::malformed, "observation log line " + std::to_string(lineno) + ": expected " +
                                              std::to_string(n) + " fields");
      }
    };
    const auto& kind = f[0];
    if (kind == "sign") {
      need(3);
      log.signs.push_back({number<std::size_t>("voter", f[1]), number<TimeMs>("at", f[2])});
    } else if (kind == "arrival") {
      need(5);
      BallotVerdict v = f[3] == "accepted"    ? BallotVerdict::accepted
                        : f[3] == "duplicate" ? BallotVerdict::duplicate
                                              : BallotVerdict::rejected;
      log.arrivals.push_back({f[1], number<TimeMs>("at", f[2]), v, f[4]});
    } else if (kind == "queue") {
      need(4);
      log.queues.push_back({f[1], number<TimeMs>("at", f[2]), number<std::size_t>("size", f[3])});
    } else if (kind == "size") {
      need(4);
      log.sizes.push_back({number<std::size_t>("voter", f[1]), number<std::size_t>("route", f[2]),
                           number<std::size_t>("bytes", f[3])});
    } else if (kind == "truth") {
      need(5);
      log.truth.push_back({number<std::size_t>("voter", f[1]), f[2], f[3], f[4]});
    } else {
      throw Error(ErrorCode::malformed, "observation log line " + std::to_string(lineno) + ": unknown record");
    }
  }
  return log;
}

// --- the simulation --------------------------------------------------------------

namespace {

constexpr std::string_view kPepsHost = "https://peps.example";
constexpr std::string_view kSpUrl = "https://sp.example/wserv.php";

class Simulation;

class SimClock final : public Clock {
 public:
  explicit SimClock(const SimContext& sim) : sim_(sim) {}
  TimeMs now() override { return sim_.now(); }
  void sleep_until(TimeMs) override {}

 private:
  const SimContext& sim_;
};

class Simulation final : public SimContext, public ClientTransport {
 public:
  Simulation(const SimConfig& config, const SimHooks& hooks);

  SimResult run();

  TimeMs now() const override { return now_; }
  const SimConfig& config() const override { return config_; }
  ServiceProvider& sp() override { return *sp_; }
  const SurveyRecord& survey() const override { return *survey_; }
  NodeRelay& node(std::size_t index) override { return *nodes_.at(index); }
  std::size_t node_count() const override { return nodes_.size(); }
  RandomSource& rng() override { return adversary_rng_; }
  void at(TimeMs when, std::function<void()> action) override {
    events_.emplace(std::make_pair(std::max(when, now_), seq_++), std::move(action));
  }

 private:
  struct Voter {
    std::size_t index = 0;
    std::string option;
    DeterministicRng rng;
    std::unique_ptr<Client> client;
    ParticipationPlan plan;
    std::vector<PreparedBundle> bundles;
    std::string abort_stage;
  };

  struct Delivery {
    DeliveryResult result;
    std::optional<std::size_t> node;
    std::optional<EntryId> entry;
  };

  // ClientTransport
  std::string post(const std::string& url, const FormRequest& form) override;
  std::string get(const std::string& url) override;

  Delivery deliver(const std::string& url, const SealedPackage& sealed, TimeMs now);
  TimeMs latency();
  void tick();
  void start_voter(Voter& v);
  void submit(Voter& v, std::size_t bundle_index);
  bool idle() const;

  SimConfig config_;
  SimHooks hooks_;
  DeterministicRng root_;
  DeterministicRng key_rng_;
  DeterministicRng transport_rng_;
  DeterministicRng adversary_rng_;
  TimeMs now_;

  std::vector<std::unique_ptr<NodeRelay>> nodes_;
  std::map<std::string, std::size_t> node_by_url_;
  std::vector<NodeInfo> infos_;
  std::unique_ptr<Gateway> gateway_;
  std::unique_ptr<ServiceProvider> sp_;
  const SurveyRecord* survey_ = nullptr;
  SimClock clock_{*this};
  std::deque<Voter> voters_;

  std::map<std::pair<TimeMs, std::uint64_t>, std::function<void()>> events_;
  std::uint64_t seq_ = 0;
  TimeMs last_clo_d_ = 0;

  // Honest packages, followed from hop to hop: (node, entry) -> voter.
  std::map<std::pair<std::size_t, EntryId>, std::size_t> tags_;
  std::optional<std::size_t> submitting_;
  bool tagged_ = false;
  std::vector<std::size_t> last_queue_;

  ObservationLog log_;
  SimMetrics metrics_;
};

Simulation::Simulation(const SimConfig& config, const SimHooks& hooks)
    : config_(config),
      hooks_(hooks),
      root_(config.seed),
      key_rng_(root_.fork("keys")),
      transport_rng_(root_.fork("transport")),
      adversary_rng_(root_.fork("adversary")),
      now_(config.start) {
  config_.validate();

  RelayPolicy policy = config_.policy == RelayMode::legacy ? RelayPolicy::legacy() : RelayPolicy::hardened();
  policy.reject_time = config_.reject_time;
  policy.in_flight_timeout = config_.cadence;
  for (std::size_t i = 0; i < config_.nodes; ++i) {
    auto url = "https://node" + std::to_string(i) + ".example/relay";
    nodes_.push_back(std::make_unique<NodeRelay>(url, generate_keypair(config_.key_bits, key_rng_), policy));
    node_by_url_[url] = i;
    infos_.push_back(nodes_.back()->info(config_.node_weights.empty() ? 1.0 : config_.node_weights[i]));
  }
  last_queue_.assign(nodes_.size(), 0);

  auto entity = generate_keypair(config_.key_bits, key_rng_, KeyRole::entity_signing);
  TrustStore trust;
  trust.add("demoSP", entity.public_key(), TrustRole::service_provider);
  gateway_ = std::make_unique<Gateway>(std::move(trust), infos_, [this](const std::string& url,
                                                                        const SealedPackage& sealed, TimeMs t) {
    auto d = deliver(url, sealed, t);
    if (submitting_ && d.node && d.entry) {
      tags_[{*d.node, *d.entry}] = *submitting_;
      tagged_ = true;
    }
    return d.result;
  });
  sp_ = std::make_unique<ServiceProvider>(std::string(kSpUrl), std::move(entity), "demoSP",
                                          std::make_shared<DemoAuthorizer>(), gateway_.get(), key_rng_);

  SurveyParams params;
  params.name = "simulated survey";
  params.end_d = config_.end_d();
  params.clo_d = config_.clo_d();
  params.rou_len = config_.rou_len;
  params.options = config_.options;
  params.key_bits = config_.key_bits;
  params.sig_mode = config_.sig_mode;
  survey_ = &sp_->create_survey(params);
  last_clo_d_ = config_.clo_d();
  if (hooks_.acceptance_window) {
    sp_->override_acceptance_window(survey_->survey_id, hooks_.acceptance_window->first,
                                    hooks_.acceptance_window->second);
    last_clo_d_ = std::max(last_clo_d_, hooks_.acceptance_window->second);
  }

  auto voter_rng = root_.fork("voters");
  for (std::size_t i = 0; i < config_.voters; ++i) {
    Voter v{i, config_.options[i % config_.options.size()], voter_rng.fork("voter-" + std::to_string(i)), nullptr,
            {}, {}, {}};
    voters_.push_back(std::move(v));
  }
  for (auto& v : voters_) {
    TimeMs when;
    if (config_.mode == ScheduleMode::immediate) {
      when = config_.start + static_cast<TimeMs>(v.index) * config_.immediate_spacing;
    } else {
      when = voter_rng.uniform_signed(config_.start, config_.end_d() - config_.cadence);
    }
    at(when, [this, &v] { start_voter(v); });
  }
}

std::string Simulation::post(const std::string& url, const FormRequest& form) {
  if (url != kSpUrl) throw Error(ErrorCode::transport, "no route to " + url);
  return sp_->handle_request(form, now_);
}

std::string Simulation::get(const std::string& url) {
  if (!url.starts_with(kPepsHost)) throw Error(ErrorCode::transport, "no route to " + url);
  return gateway_->handle_get(std::string_view(url).substr(kPepsHost.size()));
}

TimeMs Simulation::latency() { return transport_rng_.uniform_signed(config_.latency_min, config_.latency_max); }

Simulation::Delivery Simulation::deliver(const std::string& url, const SealedPackage& sealed, TimeMs t) {
  Delivery d{TransportFailure{}, std::nullopt, std::nullopt};
  if (url == survey_->descriptor.bbx_url) {
    auto outcome = sp_->receive_ballot(sealed, t);
    log_.arrivals.push_back(
        {outcome.id_ticket, t, outcome.verdict, outcome.reason ? std::string(to_string(*outcome.reason)) : ""});
    if (outcome.challenge) d.result = *outcome.challenge;
    return d;
  }
  auto it = node_by_url_.find(url);
  if (it == node_by_url_.end()) return d;
  auto res = nodes_[it->second]->handle_inbound(sealed, t);
  if (res.challenge) d.result = *res.challenge;
  d.node = it->second;
  d.entry = res.entry;
  return d;
}

void Simulation::start_voter(Voter& v) {
  ClientOptions opts;
  opts.token = "voter-" + std::to_string(v.index);
  opts.directory_url = std::string(kPepsHost) + directory_path(DirectoryFormat::xml);
  opts.check_commitment = config_.check_commitment;
  opts.published_commitment = survey_->commitment;
  opts.padding.mode = config_.padding;
  opts.safety = config_.safety;
  opts.tolerance = config_.tolerance;
  opts.reject_time = config_.reject_time;
  if (config_.mode == ScheduleMode::immediate) opts.immediate_delay = config_.end_d() + config_.safety - config_.start;
  v.client = std::make_unique<Client>(*this, clock_, v.rng, std::move(opts));

  auto descriptor = hooks_.descriptor_for ? hooks_.descriptor_for(v.index, survey_->descriptor) : survey_->descriptor;
  try {
    v.plan = v.client->prepare(descriptor, as_bytes(v.option), config_.paths, {}, v.bundles);
  } catch (const StageError& e) {
    v.abort_stage = std::string(to_string(e.stage()));
    return;
  }
  for (std::size_t b = 0; b < v.bundles.size(); ++b) {
    const auto& bundle = v.bundles[b];
    log_.sizes.push_back({v.index, bundle.route, encode(bundle.bundle.sealed.front()).size()});
    at(bundle.submit_at - v.plan.clock_offset, [this, &v, b] { submit(v, b); });
  }
}

void Simulation::submit(Voter& v, std::size_t bundle_index) {
  ++metrics_.injected;
  submitting_ = v.index;
  tagged_ = false;
  const auto& bundle = v.bundles[bundle_index];
  v.client->submit(bundle, v.plan);
  submitting_.reset();
  // Direct submissions show up as ballot arrivals; anything else that left
  // no tag never entered the network.
  if (!tagged_ && !v.plan.routes.at(bundle.route).hops.empty()) ++metrics_.lost;
}

bool Simulation::idle() const {
  if (!events_.empty()) return false;
  return std::all_of(nodes_.begin(), nodes_.end(), [](const auto& n) { return n->queue_size() == 0; });
}

void Simulation::tick() {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    auto& node = *nodes_[i];
    node.expire_queue(now_);
    for (auto& action : node.process_queue(now_)) {
      if (config_.loss > 0 && transport_rng_.uniform_real() < config_.loss) continue;
      TimeMs arrive = now_ + latency();
      at(arrive, [this, i, action = std::move(action)] {
        auto d = deliver(action.url, action.package, now_);
        auto tag = tags_.find({i, action.entry});
        if (tag != tags_.end() && d.node && d.entry) tags_[{*d.node, *d.entry}] = tag->second;
        at(now_ + latency(), [this, i, entry = action.entry, result = d.result] {
          EntryState state;
          try {
            state = nodes_[i]->on_delivery_result(entry, result, now_);
          } catch (const Error&) {
            return;  // expired or timed out meanwhile
          }
          if (state == EntryState::delivered) tags_.erase({i, entry});
        });
      });
    }
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    auto size = nodes_[i]->queue_size();
    if (size != last_queue_[i]) {
      log_.queues.push_back({nodes_[i]->url(), now_, size});
      last_queue_[i] = size;
    }
  }
  if (hooks_.after_tick) hooks_.after_tick(*this, now_);

  TimeMs horizon = last_clo_d_ + config_.horizon_after_clod;
  if (now_ > last_clo_d_ && idle()) return;
  if (now_ >= horizon) {
    metrics_.non_quiescent = !idle();
    return;
  }
  at(now_ + config_.cadence, [this] { tick(); });
}

SimResult Simulation::run() {
  if (hooks_.setup) hooks_.setup(*this);
  at(config_.start + config_.cadence, [this] { tick(); });
  TimeMs horizon = last_clo_d_ + config_.horizon_after_clod;
  while (!events_.empty()) {
    auto it = events_.begin();
    if (it->first.first > horizon + config_.cadence) {
      metrics_.non_quiescent = true;
      break;
    }
    now_ = it->first.first;
    auto action = std::move(it->second);
    events_.erase(it);
    action();
  }

  SimResult result;
  result.survey_id = survey_->survey_id;
  result.nodes = infos_;
  result.tally = sp_->tally(survey_->survey_id, std::max(now_, last_clo_d_) + 1);
  result.audit = sp_->tally_and_publish(survey_->survey_id, std::max(now_, last_clo_d_) + 1);

  std::map<std::string, std::size_t> voter_of;
  for (const auto& v : voters_) {
    GroundTruth t{v.index, v.abort_stage.empty() ? v.plan.ticket.id_ticket : std::string{}, v.option, v.abort_stage};
    if (!t.id_ticket.empty()) voter_of[t.id_ticket] = v.index;
    log_.truth.push_back(std::move(t));
    if (!v.abort_stage.empty()) ++metrics_.aborted;
  }
  std::map<std::size_t, TimeMs> first_sign;
  for (const auto& s : sp_->sign_log()) {
    if (!s.token.starts_with("voter-")) continue;
    auto idx = number<std::size_t>("token", s.token.substr(6));
    if (!first_sign.contains(idx)) {
      first_sign[idx] = s.at;
      log_.signs.push_back({idx, s.at});
    }
  }
  for (const auto& a : log_.arrivals) {
    if (!voter_of.contains(a.id_ticket)) continue;
    switch (a.verdict) {
      case BallotVerdict::accepted: ++metrics_.accepted; break;
      case BallotVerdict::duplicate: ++metrics_.duplicates; break;
      case BallotVerdict::rejected: ++metrics_.rejected; break;
    }
  }
  metrics_.lost += tags_.size();
  metrics_.voters = config_.voters;
  for (const auto& n : nodes_) metrics_.max_queue[n->url()] = n->metrics().max_queue;
  metrics_.finished_at = now_;
  result.metrics = metrics_;
  result.log = log_;
  return result;
}

}  // namespace

SimResult run_scenario(const SimConfig& config, const SimHooks& hooks) {
  Simulation sim(config, hooks);
  return sim.run();
}

std::string render_report(const SimResult& r) {
  std::ostringstream o;
  const auto& m = r.metrics;
  o << "survey = " << r.survey_id << "\n"
    << "voters = " << m.voters << "\n"
    << "aborted = " << m.aborted << "\n"
    << "injected = " << m.injected << "\n"
    << "accepted = " << m.accepted << "\n"
    << "duplicates = " << m.duplicates << "\n"
    << "rejected = " << m.rejected << "\n"
    << "lost = " << m.lost << "\n"
    << "conserved = " << (m.conserved() ? "yes" : "no") << "\n"
    << "non_quiescent = " << (m.non_quiescent ? "yes" : "no") << "\n"
    << "finished_at = " << m.finished_at << "\n"
    << "tally.entries = " << r.tally.entries.size() << "\n";
  for (const auto& [option, n] : r.tally.counts) o << "tally.option." << option << " = " << n << "\n";
  o << "tally.duplicates = " << r.tally.duplicates << "\n";
  for (const auto& [reason, n] : r.tally.rejected) o << "tally.rejected." << reason << " = " << n << "\n";
  for (const auto& [node, n] : m.max_queue) o << "max_queue." << node << " = " << n << "\n";
  return o.str();
}

std::string summarize_log(const ObservationLog& log) {
  std::ostringstream o;
  std::map<std::string, std::size_t> verdicts;
  TimeMs first = 0, last = 0;
  bool any = false;
  for (const auto& a : log.arrivals) {
    ++verdicts[std::string(to_string(a.verdict))];
    if (!any || a.at < first) first = a.at;
    if (!any || a.at > last) last = a.at;
    any = true;
  }
  std::size_t aborted = 0;
  std::map<std::string, std::size_t> stages;
  for (const auto& t : log.truth) {
    if (!t.abort_stage.empty()) {
      ++aborted;
      ++stages[t.abort_stage];
    }
  }
  std::map<std::string, std::size_t> peak;
  for (const auto& q : log.queues) peak[q.node] = std::max(peak[q.node], q.size);

  o << "voters: " << log.truth.size() << " (" << aborted << " aborted)\n";
  for (const auto& [stage, n] : stages) o << "  aborted at " << stage << ": " << n << "\n";
  o << "sign requests: " << log.signs.size() << "\n";
  o << "ballot arrivals: " << log.arrivals.size() << "\n";
  for (const auto& [v, n] : verdicts) o << "  " << v << ": " << n << "\n";
  if (any) o << "arrival span: " << first << " .. " << last << " ms\n";
  o << "outer packages observed: " << log.sizes.size() << "\n";
  if (!log.sizes.empty()) {
    auto [lo, hi] = std::minmax_element(log.sizes.begin(), log.sizes.end(),
                                        [](const auto& a, const auto& b) { return a.bytes < b.bytes; });
    o << "  size range: " << lo->bytes << " .. " << hi->bytes << " bytes\n";
  }
  for (const auto& [node, n] : peak) o << "peak queue " << node << ": " << n << "\n";
  o << "timing link accuracy: " << format_double(timing_link_attack(log)) << "\n";
  return o.str();
}

double timing_link_attack(const ObservationLog& log) {
  std::map<std::size_t, std::string> ticket_of;
  for (const auto& t : log.truth) {
    if (!t.id_ticket.empty()) ticket_of[t.voter] = t.id_ticket;
  }
  if (ticket_of.empty()) return 0.0;

  std::map<std::size_t, TimeMs> first_sign;
  for (const auto& s : log.signs) {
    auto [it, fresh] = first_sign.emplace(s.voter, s.at);
    if (!fresh) it->second = std::min(it->second, s.at);
  }
  std::vector<std::pair<TimeMs, std::size_t>> signs;
  for (const auto& [voter, at] : first_sign) signs.emplace_back(at, voter);
  std::sort(signs.begin(), signs.end());

  std::vector<std::pair<TimeMs, std::string>> arrivals;
  for (const auto& a : log.arrivals) {
    if (a.verdict == BallotVerdict::accepted) arrivals.emplace_back(a.at, a.id_ticket);
  }
  std::sort(arrivals.begin(), arrivals.end());

  std::size_t correct = 0;
  for (std::size_t k = 0; k < std::min(signs.size(), arrivals.size()); ++k) {
    auto it = ticket_of.find(signs[k].second);
    if (it != ticket_of.end() && it->second == arrivals[k].second) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ticket_of.size());
}

}  // namespace stork
