#include <gtest/gtest.h>

#include <set>

#include "stork/sim.hpp"

using namespace stork;

namespace {

SimConfig small(std::uint64_t seed = 1) {
  SimConfig c;
  c.seed = seed;
  c.voters = 8;
  c.nodes = 3;
  c.rou_len = 2;
  c.paths = 2;
  c.horizon_after_clod = 3'600'000;
  return c;
}

}  // namespace

TEST(SimConfig, ParseAndRoundtrip) {
  auto c = SimConfig::parse(
      "# comment\nseed = 9\n[sim]\nvoters=12\nnodes = 5\nnode_weights = 1, 2, 3, 4, 5\npolicy = legacy\n"
      "padding = equalize\nmode = mixed\nloss = 0.1\noptions = yes, no, maybe\nsig_mode = hash\n"
      "[scenario]\nkind = run\n");
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.voters, 12u);
  EXPECT_EQ(c.node_weights, (std::vector<double>{1, 2, 3, 4, 5}));
  EXPECT_EQ(c.policy, RelayMode::legacy);
  EXPECT_EQ(c.padding, PaddingMode::equalize);
  EXPECT_DOUBLE_EQ(c.loss, 0.1);
  EXPECT_EQ(c.options, (std::vector<std::string>{"yes", "no", "maybe"}));
  EXPECT_EQ(c.sig_mode, SignatureMode::hash_then_sign);
  EXPECT_EQ(SimConfig::parse(c.to_ini()).to_ini(), c.to_ini());
}

TEST(SimConfig, Rejections) {
  EXPECT_THROW(SimConfig::parse("colour = blue\n"), Error);
  EXPECT_THROW(SimConfig::parse("voters = many\n"), Error);
  EXPECT_THROW(SimConfig::parse("voters = 0\n"), Error);
  EXPECT_THROW(SimConfig::parse("rou_len = 3\nnodes = 2\n"), Error);
  EXPECT_THROW(SimConfig::parse("frame_s = 600\n"), Error);
  EXPECT_THROW(SimConfig::parse("loss = 1\n"), Error);
  EXPECT_THROW(SimConfig::parse("node_weights = 1,2\n"), Error);
}

TEST(Sim, ConservesPackages) {
  auto r = run_scenario(small());
  const auto& m = r.metrics;
  EXPECT_EQ(m.voters, 8u);
  EXPECT_EQ(m.aborted, 0u);
  EXPECT_EQ(m.injected, 16u);
  EXPECT_EQ(m.accepted, 8u);
  EXPECT_EQ(m.duplicates, 8u);
  EXPECT_TRUE(m.conserved());
  EXPECT_FALSE(m.non_quiescent);
  EXPECT_EQ(r.tally.entries.size(), 8u);
  EXPECT_EQ(r.tally.counts.at("A") + r.tally.counts.at("B"), 8u);
}

TEST(Sim, ConservesUnderLoss) {
  auto c = small(4);
  c.loss = 0.9;
  auto r = run_scenario(c);
  EXPECT_TRUE(r.metrics.conserved());
  EXPECT_GT(r.metrics.lost, 0u);
  EXPECT_LT(r.metrics.accepted, 8u);
}

TEST(Sim, Deterministic) {
  auto a = run_scenario(small(7));
  auto b = run_scenario(small(7));
  EXPECT_EQ(a.log.serialize(), b.log.serialize());
  EXPECT_EQ(render_report(a), render_report(b));
  auto c = run_scenario(small(8));
  EXPECT_NE(a.log.serialize(), c.log.serialize());
}

TEST(Sim, LogRoundtrip) {
  auto r = run_scenario(small(2));
  auto text = r.log.serialize();
  EXPECT_EQ(text.rfind("# stork observation log v1", 0), 0u);
  auto back = ObservationLog::parse(text);
  EXPECT_EQ(back, r.log);
  EXPECT_FALSE(summarize_log(back).empty());
  EXPECT_THROW(ObservationLog::parse("nonsense,1,2\n"), Error);
}

TEST(Sim, DirectRoutes) {
  auto c = small(3);
  c.rou_len = 0;
  auto r = run_scenario(c);
  EXPECT_EQ(r.metrics.accepted, 8u);
  EXPECT_TRUE(r.metrics.conserved());
  for (const auto& [node, peak] : r.metrics.max_queue) EXPECT_EQ(peak, 0u);
}

TEST(Sim, SingleVoter) {
  auto c = small(5);
  c.voters = 1;
  c.paths = 3;
  auto r = run_scenario(c);
  EXPECT_EQ(r.metrics.accepted, 1u);
  EXPECT_EQ(r.metrics.duplicates, 2u);
  EXPECT_TRUE(r.metrics.conserved());
  ASSERT_EQ(r.log.truth.size(), 1u);
  EXPECT_EQ(r.log.truth[0].option, "A");
}

TEST(Sim, ArrivalsInsideFrame) {
  auto c = small(6);
  auto r = run_scenario(c);
  for (const auto& a : r.log.arrivals) {
    EXPECT_GE(a.at, c.end_d() + c.safety);
    EXPECT_LE(a.at, c.clo_d());
  }
  for (const auto& s : r.log.signs) EXPECT_LT(s.at, c.end_d());
}

TEST(Attack, ImmediateModeIsLinkable) {
  auto c = small(9);
  c.mode = ScheduleMode::immediate;
  c.latency_min = c.latency_max = 0;
  auto r = run_scenario(c);
  EXPECT_DOUBLE_EQ(timing_link_attack(r.log), 1.0);
}

TEST(Attack, LengthProfile) {
  auto c = small(10);
  c.options = {"A", "Bbbbbbbbbbbbbbbbbbbb"};
  auto r = run_scenario(c);
  auto none = length_profile_attack(r.log, c.options);
  EXPECT_DOUBLE_EQ(none.accuracy, 1.0);
  c.padding = PaddingMode::equalize;
  auto padded = length_profile_attack(run_scenario(c).log, c.options);
  EXPECT_LT(padded.accuracy, 1.0);
  auto single = length_profile_attack(r.log, {"A"});
  EXPECT_TRUE(single.degenerate);
  EXPECT_THROW(length_profile_attack(r.log, {"A", "B", "C"}), Error);
}

TEST(Attack, ClodSplit) {
  auto c = small(11);
  auto open = clod_split_scenario(c, {0, 3}, c.frame + 3'600'000, false);
  EXPECT_EQ(open.identified, 2u);
  EXPECT_DOUBLE_EQ(open.accuracy, 1.0);
  EXPECT_TRUE(open.aborted.empty());
  auto guarded = clod_split_scenario(c, {0, 3}, c.frame + 3'600'000, true);
  EXPECT_EQ(guarded.aborted.size(), 2u);
  EXPECT_EQ(guarded.identified, 0u);
  EXPECT_EQ(guarded.tallied, 6u);
}

TEST(Attack, ChallengeBombHardenedDrains) {
  auto c = small(12);
  auto r = challenge_bomb_scenario(c, 10, 0);
  EXPECT_EQ(r.at_horizon, 0u);
  ASSERT_TRUE(r.drained_at);
  ASSERT_TRUE(r.first_attempt);
  EXPECT_LE(*r.drained_at - *r.first_attempt, c.cadence);
  EXPECT_EQ(r.run.metrics.accepted, 8u);
}
