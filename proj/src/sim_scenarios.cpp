#include <algorithm>
#include <set>

#include "stork/sim.hpp"

namespace stork {

ClodSplitReport clod_split_scenario(SimConfig config, const std::vector<std::size_t>& victims, TimeMs shift,
                                    bool check_commitment) {
  std::set<std::size_t> unique(victims.begin(), victims.end());
  if (unique.empty() || unique.size() != victims.size()) throw Error(ErrorCode::invalid_argument, "bad victim set");
  if (*unique.rbegin() >= config.voters || unique.size() >= config.voters) {
    throw Error(ErrorCode::invalid_argument, "victims must be a proper subset of the voters");
  }
  if (shift < 0) throw Error(ErrorCode::invalid_argument, "negative shift");
  config.check_commitment = check_commitment;

  std::map<std::size_t, std::size_t> slot;
  for (std::size_t j = 0; j < victims.size(); ++j) slot[victims[j]] = j;
  auto window_of = [&](std::size_t j) {
    TimeMs d = static_cast<TimeMs>(j + 1) * shift;
    return std::make_pair(config.end_d() + d, config.clo_d() + d);
  };

  SimHooks hooks;
  hooks.descriptor_for = [&](std::size_t voter, const SurveyDescriptor& honest) {
    auto it = slot.find(voter);
    if (it == slot.end() || shift == 0) return honest;
    auto d = honest;
    std::tie(d.end_d, d.clo_d) = window_of(it->second);
    return d;
  };
  if (shift > 0) hooks.acceptance_window = std::make_pair(config.end_d(), window_of(victims.size() - 1).second);

  ClodSplitReport report;
  report.victims = victims;
  report.run = run_scenario(config, hooks);
  const auto& log = report.run.log;

  std::map<std::size_t, const GroundTruth*> truth;
  for (const auto& t : log.truth) truth[t.voter] = &t;
  for (auto v : victims) {
    if (!truth.at(v)->abort_stage.empty()) report.aborted.push_back(v);
  }

  // The SP knows which window it served to whom and claims, for each victim,
  // an accepted ballot that landed in that victim's window.
  DeterministicRng pick(config.seed ^ 0x5c1d5);
  std::set<std::string> claimed;
  for (std::size_t j = 0; j < victims.size(); ++j) {
    auto [lo, hi] = shift == 0 ? std::make_pair(config.end_d(), config.clo_d()) : window_of(j);
    std::vector<std::string> candidates;
    for (const auto& a : log.arrivals) {
      if (a.verdict == BallotVerdict::accepted && a.at >= lo && a.at <= hi && !claimed.contains(a.id_ticket)) {
        candidates.push_back(a.id_ticket);
      }
    }
    if (candidates.empty()) continue;
    const auto& guess = candidates[pick.uniform(0, candidates.size() - 1)];
    claimed.insert(guess);
    if (truth.at(victims[j])->id_ticket == guess) ++report.identified;
  }
  report.accuracy = static_cast<double>(report.identified) / static_cast<double>(victims.size());
  report.tallied = report.run.tally.entries.size();
  return report;
}

BombReport challenge_bomb_scenario(SimConfig config, std::size_t bombs, std::size_t target_node) {
  if (config.rou_len < 1) throw Error(ErrorCode::invalid_argument, "bombs need at least one relay hop");
  if (target_node >= config.nodes) throw Error(ErrorCode::invalid_argument, "no such target node");
  if (bombs == 0) throw Error(ErrorCode::invalid_argument, "no bombs");

  BombReport report;
  report.policy = config.policy;
  report.bombs = bombs;
  const TimeMs far_clo_d = config.clo_d() + 10LL * 365 * 86'400'000;
  const TimeMs inject_at = config.start + config.cadence / 2;
  const TimeMs upstream_snd = inject_at + config.cadence;
  const TimeMs target_snd = config.end_d() + config.safety;

  SimHooks hooks;
  hooks.setup = [&](SimContext& ctx) {
    report.target = ctx.node(target_node).url();
    ctx.at(inject_at, [&ctx, &report, bombs, target_node, far_clo_d, upstream_snd, target_snd] {
      auto& rng = ctx.rng();
      const auto& survey = ctx.survey();
      const auto& d = survey.descriptor;
      const auto reject = ctx.config().reject_time;

      std::vector<NodeInfo> hops;
      if (ctx.node_count() > 1) hops.push_back(ctx.node((target_node + 1) % ctx.node_count()).info());
      hops.push_back(ctx.node(target_node).info());

      Bundle bundle;
      for (std::size_t b = 0; b < bombs; ++b) {
        auto c = make_challenges(4, rng);
        std::uint64_t owed = c[2];
        std::uint64_t answered = c[3] == owed ? owed + 1 : c[3];

        Participation inner;
        inner.p_chal = answered;
        inner.ticket = Ticket{base64_encode(rng.bytes(kTicketIdBytes)), survey.survey_id, d.end_d, d.effective_clo_d()};
        inner.signature = rng.bytes(survey.signing.public_key().byte_length());
        inner.form = rng.bytes(16);
        auto envelope = hybrid_seal(as_bytes(encode(inner)), d.ballot_box_key(), rng);

        std::vector<LayerSpec> specs;
        if (hops.size() == 2) {
          specs.push_back({hops[1].url, c[1], c[0], upstream_snd, d.effective_clo_d(), d.effective_clo_d() + reject});
        }
        specs.push_back({d.bbx_url, owed, hops.size() == 2 ? c[1] : c[0], target_snd, far_clo_d, far_clo_d + reject});
        auto sealed = seal_layers(envelope, hops, specs, d.bbx_url, rng);
        sealed.id = b;
        bundle.sealed.push_back(std::move(sealed));
      }
      ctx.sp().proxy_bundle("attacker", survey.survey_id, std::move(bundle), ctx.now());
    });
  };
  hooks.after_tick = [&](SimContext& ctx, TimeMs now) {
    std::size_t count = 0;
    for (const auto& e : ctx.node(target_node).snapshot()) {
      if (e.package.clo_d == far_clo_d) ++count;
    }
    report.series.emplace_back(now, count);
    if (!report.first_attempt && now >= target_snd && count > 0) report.first_attempt = now;
    if (report.first_attempt && !report.drained_at && count == 0) report.drained_at = now;
  };

  report.run = run_scenario(config, hooks);

  std::size_t peak = 0;
  for (const auto& [t, n] : report.series) peak = std::max(peak, n);
  report.upstream_relayed = peak;
  report.at_horizon = report.series.empty() ? 0 : report.series.back().second;
  auto full = std::find_if(report.series.begin(), report.series.end(), [&](const auto& s) { return s.second == peak; });
  report.min_after_injection = peak;
  for (auto it = full; it != report.series.end(); ++it) report.min_after_injection = std::min(report.min_after_injection, it->second);
  return report;
}

LengthAttackResult length_profile_attack(const ObservationLog& log, const std::vector<std::string>& options) {
  LengthAttackResult r;
  r.observations = log.sizes.size();
  if (options.size() < 2) {
    r.accuracy = 1.0;
    r.degenerate = true;
    return r;
  }
  if (options.size() > 2) throw Error(ErrorCode::invalid_argument, "the size classifier handles two options");
  if (log.sizes.empty()) return r;

  const auto& longer = options[0].size() >= options[1].size() ? options[0] : options[1];
  const auto& shorter = &longer == &options[0] ? options[1] : options[0];
  std::map<std::size_t, std::string> option_of;
  for (const auto& t : log.truth) option_of[t.voter] = t.option;

  auto [lo, hi] = std::minmax_element(log.sizes.begin(), log.sizes.end(),
                                      [](const auto& a, const auto& b) { return a.bytes < b.bytes; });
  r.threshold = (static_cast<double>(lo->bytes) + static_cast<double>(hi->bytes)) / 2.0;
  std::size_t correct = 0;
  for (const auto& s : log.sizes) {
    const auto& guess = static_cast<double>(s.bytes) > r.threshold ? longer : shorter;
    if (option_of.at(s.voter) == guess) ++correct;
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(log.sizes.size());
  return r;
}

}  // namespace stork
