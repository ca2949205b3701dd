#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <memory>
#include <set>

#include "stork/client.hpp"
#include "stork/gateway.hpp"
#include "stork/node_relay.hpp"
#include "stork/sp_service.hpp"

using namespace stork;

namespace {

constexpr TimeMs kEnd = 1395820821000;
constexpr TimeMs kClo = kEnd + 3'600'000;
const std::string kDirectory = "https://peps.test/PEPS/anonymity/resources/nodes/citizen/xml";

class Stack final : public ClientTransport {
 public:
  explicit Stack(ManualClock& clock, std::size_t nodes = 4, int rou_len = 2) : rng_(61), clock_(clock) {
    for (std::size_t i = 0; i < nodes; ++i) {
      auto url = "https://n" + std::to_string(i) + ".test/relay";
      relays_.push_back(
          std::make_unique<NodeRelay>(url, generate_keypair(512, rng_, KeyRole::encryption), RelayPolicy::hardened()));
      infos_.push_back(relays_.back()->info());
    }
    auto entity = generate_keypair(512, rng_, KeyRole::entity_signing);
    TrustStore trust;
    trust.add("sp", entity.public_key());
    gateway_ = std::make_unique<Gateway>(std::move(trust), infos_,
                                         [this](const std::string& u, const SealedPackage& s, TimeMs now) {
                                           return deliver(u, s, now);
                                         });
    sp_ = std::make_unique<ServiceProvider>("https://sp.test/wserv.php", std::move(entity), "sp",
                                            std::make_shared<DemoAuthorizer>(), gateway_.get(), rng_);
    SurveyParams p;
    p.end_d = kEnd;
    p.clo_d = kClo;
    p.rou_len = rou_len;
    p.options = {"A", "B"};
    p.key_bits = 512;
    survey_id = sp_->create_survey(p).survey_id;
  }

  std::string post(const std::string& url, const FormRequest& form) override {
    ++posts[form.get("param")];
    if (url != sp_->url()) throw Error(ErrorCode::transport, "no route to " + url);
    return sp_->handle_request(form, clock_.now());
  }

  std::string get(const std::string& url) override {
    ++gets;
    const std::string host = "https://peps.test";
    if (!url.starts_with(host)) throw Error(ErrorCode::transport, "no route to " + url);
    return gateway_->handle_get(url.substr(host.size()));
  }

  DeliveryResult deliver(const std::string& url, const SealedPackage& s, TimeMs now) {
    if (dead.count(url)) return TransportFailure{};
    if (url == descriptor().bbx_url) {
      auto out = sp_->receive_ballot(s, now);
      if (out.challenge) return *out.challenge;
      return TransportFailure{};
    }
    for (auto& r : relays_) {
      if (r->url() == url) {
        auto res = r->handle_inbound(s, now);
        if (res.challenge) return *res.challenge;
        return TransportFailure{};
      }
    }
    return TransportFailure{};
  }

  void drain_until(TimeMs until) {
    while (clock_.now() <= until) {
      for (auto& r : relays_) {
        r->expire_queue(clock_.now());
        for (const auto& a : r->process_queue(clock_.now())) {
          r->on_delivery_result(a.entry, deliver(a.url, a.package, clock_.now()), clock_.now());
        }
      }
      clock_.advance(30'000);
    }
  }

  const SurveyDescriptor& descriptor() const { return sp_->survey(survey_id).descriptor; }
  ServiceProvider& sp() { return *sp_; }
  const std::vector<NodeInfo>& nodes() const { return infos_; }

  std::string survey_id;
  std::map<std::string, int> posts;
  int gets = 0;
  std::set<std::string> dead;

 private:
  DeterministicRng rng_;
  ManualClock& clock_;
  std::vector<std::unique_ptr<NodeRelay>> relays_;
  std::vector<NodeInfo> infos_;
  std::unique_ptr<Gateway> gateway_;
  std::unique_ptr<ServiceProvider> sp_;
};

ClientOptions options_for(const Stack& stack, const std::string& token = "voter") {
  ClientOptions o;
  o.token = token;
  o.directory_url = kDirectory;
  o.published_commitment = window_commitment(stack.descriptor());
  return o;
}

std::filesystem::path temp_state(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("stork_client_" + name + ".xml");
  std::filesystem::remove(p);
  return p;
}

int total_posts(const Stack& s) {
  int n = 0;
  for (const auto& [_, c] : s.posts) n += c;
  return n;
}

}  // namespace

TEST(Ticket, FreshAndBoundToSurvey) {
  DeterministicRng rng(1);
  SurveyDescriptor d;
  d.id_svy = "1001";
  d.end_d = kEnd;
  d.clo_d = kClo;
  std::set<std::string> ids;
  for (int i = 0; i < 100; ++i) {
    auto t = generate_ticket(d, rng);
    EXPECT_EQ(base64_decode(t.id_ticket).size(), kTicketIdBytes);
    EXPECT_EQ(t.id_survey, "1001");
    EXPECT_EQ(t.end_time, kEnd);
    EXPECT_EQ(t.close_time, kClo);
    ids.insert(t.id_ticket);
  }
  EXPECT_EQ(ids.size(), 100u);
  d.clo_d = 0;
  EXPECT_EQ(generate_ticket(d, rng).close_time, d.effective_clo_d());
}

TEST(Routes, FirstHopsDistinct) {
  DeterministicRng rng(2);
  std::vector<NodeInfo> nodes;
  for (int i = 0; i < 5; ++i) nodes.push_back({"n" + std::to_string(i), {3233, 17}, 1.0 + i});
  for (int trial = 0; trial < 100; ++trial) {
    auto routes = select_routes(nodes, 3, 4, rng);
    std::set<std::string> first;
    for (const auto& r : routes) {
      ASSERT_EQ(r.size(), 3u);
      std::set<std::string> hops;
      for (const auto& n : r) hops.insert(n.url);
      EXPECT_EQ(hops.size(), 3u);
      first.insert(r.front().url);
    }
    EXPECT_EQ(first.size(), 4u);
  }
  auto direct = select_routes(nodes, 0, 2, rng);
  ASSERT_EQ(direct.size(), 2u);
  EXPECT_TRUE(direct[0].empty());
  EXPECT_THROW(select_routes(nodes, 6, 1, rng), Error);
}

TEST(Client, ParticipatesAndIsCountedOnce) {
  ManualClock clock(kEnd - 600'000);
  Stack stack(clock);
  DeterministicRng rng(3);
  Client client(stack, clock, rng, options_for(stack));
  auto report = client.participate(stack.descriptor(), as_bytes("A"), 2, {});
  EXPECT_EQ(report.routes.size(), 2u);
  EXPECT_EQ(report.delivered(), 2u);
  EXPECT_FALSE(report.resumed);
  EXPECT_EQ(stack.posts["ssign"], 1);
  EXPECT_GE(clock.now(), kEnd);
  stack.drain_until(kClo);
  auto tally = stack.sp().tally(stack.survey_id, kClo + 1);
  EXPECT_EQ(tally.counts["A"], 1u);
  EXPECT_EQ(tally.duplicates, 1u);
  ASSERT_EQ(tally.entries.size(), 1u);
  EXPECT_EQ(tally.entries[0].ticket.id_ticket, report.id_ticket);
}

TEST(Client, ScheduleStaysInsideFrame) {
  ManualClock clock(kEnd - 600'000);
  Stack stack(clock);
  DeterministicRng rng(4);
  Client client(stack, clock, rng, options_for(stack));
  std::vector<PreparedBundle> bundles;
  auto plan = client.prepare(stack.descriptor(), as_bytes("B"), 3, {}, bundles);
  ASSERT_EQ(bundles.size(), 3u);
  for (const auto& b : bundles) {
    const auto& route = plan.routes[b.route];
    EXPECT_EQ(b.submit_at, route.schedule.front());
    EXPECT_GE(route.schedule.back(), kEnd + kDefaultSafetyMs);
    EXPECT_LE(route.schedule.back(), kClo - kDefaultToleranceMs);
  }
}

TEST(Client, InsecureSourceAbortsBeforeAnySend) {
  ManualClock clock(kEnd - 600'000);
  Stack stack(clock);
  DeterministicRng rng(5);
  auto opts = options_for(stack);
  opts.directory_url = "http://peps.test/PEPS/anonymity/resources/nodes/citizen/xml";
  Client client(stack, clock, rng, opts);
  try {
    client.participate(stack.descriptor(), as_bytes("A"), 2, {});
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), Stage::source);
  }
  EXPECT_EQ(total_posts(stack), 0);
  EXPECT_EQ(stack.gets, 0);

  opts = options_for(stack);
  opts.descriptor_url = "http://sp.test/survey.php";
  Client again(stack, clock, rng, opts);
  EXPECT_THROW(again.participate(stack.descriptor(), as_bytes("A"), 2, {}), StageError);
  EXPECT_EQ(total_posts(stack), 0);
}

TEST(Client, ShiftedWindowFailsCommitment) {
  ManualClock clock(kEnd - 600'000);
  Stack stack(clock);
  DeterministicRng rng(6);
  auto shifted = stack.descriptor();
  shifted.clo_d += 1;
  EXPECT_TRUE(verify_window_commitment(stack.descriptor(), window_commitment(stack.descriptor())));
  EXPECT_FALSE(verify_window_commitment(shifted, window_commitment(stack.descriptor())));
  Client client(stack, clock, rng, options_for(stack));
  try {
    client.participate(shifted, as_bytes("A"), 2, {});
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), Stage::commitment);
  }
  EXPECT_EQ(total_posts(stack), 0);

  auto opts = options_for(stack);
  opts.published_commitment.reset();
  Client missing(stack, clock, rng, opts);
  EXPECT_THROW(missing.participate(stack.descriptor(), as_bytes("A"), 2, {}), StageError);
}

TEST(Client, DeadFirstHopsAreDropped) {
  ManualClock clock(kEnd - 600'000);
  Stack stack(clock, 4);
  stack.dead.insert(stack.nodes()[0].url);
  stack.dead.insert(stack.nodes()[1].url);
  DeterministicRng rng(7);
  Client client(stack, clock, rng, options_for(stack));
  std::vector<PreparedBundle> bundles;
  auto plan = client.prepare(stack.descriptor(), as_bytes("A"), 4, {}, bundles);
  EXPECT_EQ(stack.posts["proxy"], 1);
  EXPECT_EQ(plan.routes.size(), 2u);
  for (const auto& r : plan.routes) {
    EXPECT_FALSE(stack.dead.count(r.hops.front().url));
  }
  EXPECT_EQ(bundles.size(), plan.routes.size());
}

TEST(Client, AllFirstHopsDeadAbortsBeforeSigning) {
  ManualClock clock(kEnd - 600'000);
  Stack stack(clock, 3);
  for (const auto& n : stack.nodes()) stack.dead.insert(n.url);
  DeterministicRng rng(8);
  Client client(stack, clock, rng, options_for(stack));
  try {
    client.participate(stack.descriptor(), as_bytes("A"), 2, {});
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), Stage::probes);
    EXPECT_EQ(e.code(), ErrorCode::aborted);
  }
  EXPECT_EQ(stack.posts["ssign"], 0);
}

TEST(Client, DirectRouteSkipsProbes) {
  ManualClock clock(kEnd - 600'000);
  Stack stack(clock, 2, 0);
  DeterministicRng rng(9);
  Client client(stack, clock, rng, options_for(stack));
  auto report = client.participate(stack.descriptor(), as_bytes("B"), 1, {});
  EXPECT_EQ(report.delivered(), 1u);
  EXPECT_EQ(stack.posts["proxy"], 1);
  auto tally = stack.sp().tally(stack.survey_id, kClo + 1);
  EXPECT_EQ(tally.counts["B"], 1u);
}

TEST(Client, ResumesAfterCrashWithSameTicket) {
  ManualClock clock(kEnd - 600'000);
  Stack stack(clock);
  auto path = temp_state("resume");
  DeterministicRng rng(10);
  auto opts = options_for(stack);
  opts.abort_after = Stage::sign;
  Client crashing(stack, clock, rng, opts);
  try {
    crashing.participate(stack.descriptor(), as_bytes("A"), 2, path);
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), Stage::sign);
  }
  auto saved = load_state(path);
  ASSERT_TRUE(saved);
  EXPECT_EQ(saved->state, PlanState::probed);

  clock.advance(5'000);
  Client resumed(stack, clock, rng, options_for(stack));
  auto report = resumed.participate(stack.descriptor(), as_bytes("A"), 2, path);
  EXPECT_TRUE(report.resumed);
  EXPECT_EQ(report.id_ticket, saved->ticket.id_ticket);
  EXPECT_EQ(stack.sp().refusals(), 0u);
  EXPECT_EQ(stack.posts["ssign"], 2);
  EXPECT_EQ(load_state(path)->state, PlanState::submitted);
  stack.drain_until(kClo);
  EXPECT_EQ(stack.sp().tally(stack.survey_id, kClo + 1).entries.size(), 1u);
  std::filesystem::remove(path);
}

TEST(Client, FreshTicketWithoutStateIsRefused) {
  ManualClock clock(kEnd - 600'000);
  Stack stack(clock);
  DeterministicRng rng(11);
  auto opts = options_for(stack);
  opts.abort_after = Stage::sign;
  Client crashing(stack, clock, rng, opts);
  EXPECT_THROW(crashing.participate(stack.descriptor(), as_bytes("A"), 2, {}), StageError);
  Client again(stack, clock, rng, options_for(stack));
  try {
    again.participate(stack.descriptor(), as_bytes("A"), 2, {});
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), Stage::sign);
  }
  EXPECT_EQ(stack.sp().refusals(), 1u);
}

TEST(State, RoundtripAndDisabled) {
  auto path = temp_state("roundtrip");
  PersistedState s;
  s.survey_id = "1001";
  s.state = PlanState::signed_;
  s.ticket = {base64_encode(Bytes(21, 7)), "1001", kEnd, kClo};
  s.r = BigUint("123456789123456789");
  s.signature = BigUint(42);
  s.weak_seed = 1395820534000;
  save_state(path, s);
  auto back = load_state(path);
  ASSERT_TRUE(back);
  EXPECT_EQ(back->state, PlanState::signed_);
  EXPECT_EQ(back->ticket, s.ticket);
  EXPECT_EQ(back->r, s.r);
  EXPECT_EQ(back->signature, s.signature);
  EXPECT_EQ(back->weak_seed, s.weak_seed);
  EXPECT_FALSE(std::filesystem::exists(path.string() + ".tmp"));
  std::filesystem::remove(path);

  save_state({}, s);
  EXPECT_FALSE(load_state({}));
  EXPECT_FALSE(load_state(temp_state("missing")));
}

TEST(Client, WeakBlindingIsLinkable) {
  ManualClock clock(kEnd - 600'000 + 123);
  Stack stack(clock);
  DeterministicRng rng(12);
  auto opts = options_for(stack);
  opts.weak_fingerprint = to_byte_vector("browser-fingerprint");
  Client client(stack, clock, rng, opts);
  std::vector<PreparedBundle> bundles;
  auto plan = client.prepare(stack.descriptor(), as_bytes("A"), 1, {}, bundles);
  ASSERT_TRUE(plan.weak_seed);
  auto pub = stack.descriptor().signing_key();
  auto published = ticket_message(plan.ticket);
  auto seed = link_blinded_ticket(plan.opct, published, pub, *plan.weak_seed - 50, *plan.weak_seed + 50,
                                  *opts.weak_fingerprint);
  EXPECT_EQ(seed, plan.weak_seed);
}
