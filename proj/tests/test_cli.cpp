#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "stork/cli.hpp"
#include "stork/errors.hpp"
#include "stork/sim.hpp"
#include "stork/wire.hpp"

using namespace stork;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.code = dispatch(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "stork_cli_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

}  // namespace

TEST(Cli, KeygenIsDeterministicWithSeed) {
  auto a = cli({"keygen", "--bits", "512", "--seed", "5", "--role", "ticket-signing"});
  auto b = cli({"keygen", "--bits", "512", "--seed", "5", "--role", "ticket-signing"});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  auto kp = decode_keypair(a.out);
  EXPECT_EQ(kp.bit_length(), 512u);
  EXPECT_EQ(kp.role(), KeyRole::ticket_signing);
  EXPECT_NE(cli({"keygen", "--bits", "512", "--seed", "6"}).out, a.out);
  EXPECT_NE(cli({"keygen", "--bits", "768"}).code, 0);
}

TEST(Cli, KeypairDocumentRoundtrip) {
  auto kp = decode_keypair(cli({"keygen", "--bits", "512", "--seed", "1", "--role", "entity-signing"}).out);
  EXPECT_EQ(decode_keypair(encode_keypair(kp)).modulus(), kp.modulus());
  EXPECT_THROW(decode_keypair("<nokeys/>"), Error);
}

TEST(Cli, SurveyCreateRejectsShortWindow) {
  auto r = cli({"survey-create", "--endD", "1395820821000", "--cloD", "1395820821000", "--rou-len", "2", "--bits",
                "512", "--seed", "1"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("cloD - endD"), std::string::npos);
}

TEST(Cli, SurveyCreateThenVote) {
  auto desc = scratch("survey.xml");
  auto r = cli({"survey-create", "--endD", "1395820821000", "--cloD", "1395822501000", "--rou-len", "2", "--bits",
                "512", "--seed", "3", "--out", desc.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("idSvy = 1001"), std::string::npos);
  auto d = decode_survey_descriptor(slurp(desc));
  EXPECT_EQ(d.end_d, 1395820821000);
  EXPECT_TRUE(std::filesystem::exists(desc.string() + ".keys"));
  auto commitment = slurp(desc.string() + ".commitment");
  EXPECT_NE(r.out.find("commitment = " + commitment.substr(0, 64)), std::string::npos);

  auto v = cli({"vote", "--survey", desc.string(), "--answer", "B", "--paths", "2", "--seed", "9"});
  ASSERT_EQ(v.code, 0) << v.err << v.out;
  EXPECT_NE(v.out.find("survey = 1001"), std::string::npos);
  EXPECT_NE(v.out.find("delivered = 2"), std::string::npos);
  EXPECT_NE(v.out.find("counted = yes"), std::string::npos);

  auto again = cli({"vote", "--survey", desc.string(), "--answer", "B", "--paths", "2", "--seed", "9"});
  EXPECT_EQ(again.out, v.out);

  auto late = cli({"vote", "--survey", desc.string(), "--answer", "B", "--now", "1395820821000"});
  EXPECT_EQ(late.code, 3);
  EXPECT_NE(late.err.find("vote aborted"), std::string::npos);
}

TEST(Cli, NodeInspect) {
  auto key = scratch("node.key");
  ASSERT_EQ(cli({"keygen", "--bits", "512", "--seed", "2", "--out", key.string()}).code, 0);
  auto r = cli({"node-inspect", "--key", key.string(), "--url", "https://x/relay"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto info = decode_node_info(r.out.substr(0, r.out.find('\n')));
  EXPECT_EQ(info.url, "https://x/relay");
}

TEST(Cli, ScenarioAndReport) {
  auto cfg = scratch("run.ini");
  {
    std::ofstream f(cfg);
    f << "[sim]\nvoters = 6\nnodes = 3\nrou_len = 2\npaths = 2\nhorizon_after_clod_s = 3600\n[scenario]\nkind = run\n";
  }
  auto out = scratch("run.report");
  auto r = cli({"scenario", "--config", cfg.string(), "--seed", "4", "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  auto text = slurp(out);
  EXPECT_NE(text.find("kind = run"), std::string::npos);
  EXPECT_NE(text.find("seed = 4"), std::string::npos);
  auto log = out.string() + ".log";
  ASSERT_TRUE(std::filesystem::exists(log));
  auto rep = cli({"report", "--log", log});
  EXPECT_EQ(rep.code, 0);
  EXPECT_EQ(rep.out, summarize_log(ObservationLog::parse(slurp(log))));

  auto again = cli({"scenario", "--config", cfg.string(), "--seed", "4"});
  EXPECT_EQ(again.out, text);
}

TEST(Cli, ErrorsAndUsage) {
  EXPECT_NE(cli({"frobnicate"}).code, 0);
  EXPECT_NE(cli({}).code, 0);
  EXPECT_NE(cli({"vote", "--answer", "A"}).code, 0);
  auto missing = cli({"report", "--log", scratch("absent.log").string()});
  EXPECT_EQ(missing.code, 2);
  auto bad = scratch("bad.ini");
  {
    std::ofstream f(bad);
    f << "voters = 3\nwibble = 1\n";
  }
  EXPECT_EQ(cli({"scenario", "--config", bad.string()}).code, 2);
}
