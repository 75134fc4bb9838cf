#include "poflsc/sim.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "poflsc/crypto.hpp"
#include "poflsc/error.hpp"
#include "poflsc/fedavg.hpp"
#include "poflsc/rng.hpp"

namespace poflsc {

namespace {

nlohmann::json formation_line(const FormationEvent& e) {
  return {{"event", to_string(e.kind)},
          {"actor", e.actor.value},
          {"subject", e.subject.value},
          {"rt", e.rt}};
}

std::vector<std::uint32_t> ids(std::span<const MinerId> ms) {
  std::vector<std::uint32_t> out;
  for (auto m : ms) out.push_back(m.value);
  return out;
}

}  // namespace

ResponseTimeMatrix scenario_matrix(const ScenarioConfig& c) {
  if (c.response_matrix_csv.empty()) {
    return gen_response_matrix(c.miner_count, c.rt_mean, c.rt_std,
                               derive_seed(c.master_seed, "response-time"));
  }
  std::ifstream in(c.resolve(c.response_matrix_csv));
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + c.response_matrix_csv);
  auto m = read_matrix_csv(in);
  if (m.size() != c.miner_count) {
    throw Error(ErrorCode::kConfigInvalid,
                "response_matrix_csv: holds " + std::to_string(m.size()) + " miners, expected " +
                    std::to_string(c.miner_count));
  }
  return m;
}

Dataset scenario_dataset(const ScenarioConfig& c) {
  if (!c.idx_images.empty()) return load_idx(c.resolve(c.idx_images), c.resolve(c.idx_labels));
  return synth_dataset(c.synth_classes, c.synth_per_class, c.synth_dim, c.synth_separation,
                       derive_seed(c.master_seed, "dataset"));
}

Scenario prepare_scenario(const ScenarioConfig& config) {
  validate(config);
  Scenario s;
  s.config = config;
  const auto& c = s.config;

  s.ds = scenario_dataset(c);
  auto [train, holdout] =
      split_holdout(s.ds.size(), c.holdout_fraction, derive_seed(c.master_seed, "holdout"));
  s.holdout = std::move(holdout);
  s.shards = shard_dataset(train, c.miner_count, c.samples_per_miner,
                           derive_seed(c.master_seed, "shards"));

  std::vector<std::pair<MinerId, MinerId>> hidden;
  for (const auto& [a, b] : c.hidden_edges) hidden.emplace_back(MinerId{a}, MinerId{b});
  s.topo = std::make_unique<Topology>(
      scenario_matrix(c),
      gen_profiles(c.miner_count, c.compute_mean, c.compute_std,
                   derive_seed(c.master_seed, "profiles")),
      c.local_epochs, hidden);

  const ModelSpec spec{s.ds.dim, c.hidden_units, s.ds.classes};
  s.params0 = init_params(spec, derive_seed(c.master_seed, "init"));
  s.anchor = c.previous_block_head.empty() ? sha256(std::string_view{})
                                           : digest_from_hex(c.previous_block_head);

  s.lists = build_all_candidate_lists(*s.topo, c.sub_block_time, &s.formation);
  s.pools = establish_core_pools(s.lists, c.core_pool_threshold, c.pool_size_cap, 0,
                                 &s.formation);
  if (s.pools.empty()) {
    throw Error(ErrorCode::kNoPoolFormed,
                "no core pool exceeded threshold " + std::to_string(c.core_pool_threshold));
  }
  for (auto& pool : s.pools) {
    pool.host = select_host(pool, s.topo->profiles(), s.topo->rts());
  }
  return s;
}

std::vector<SubchainId> schedule_subchains(const std::map<SubchainId, double>& sv_by_subchain,
                                           const std::map<SubchainId, Millis>& round_time,
                                           Millis capacity) {
  std::vector<std::pair<SubchainId, double>> ranked(sv_by_subchain.begin(), sv_by_subchain.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<SubchainId> out;
  Millis used = 0.0;
  for (const auto& [id, sv] : ranked) {
    auto it = round_time.find(id);
    const Millis t = it == round_time.end() ? 0.0 : it->second;
    if (used + t > capacity) break;
    used += t;
    out.push_back(id);
  }
  return out;
}

Phase advance_phase(const Subchain& subchain, const SubchainVerification& state,
                    const AdvanceRule& rule) {
  if (subchain.phase != Phase::kSecondary) return subchain.phase;
  const bool secondary_round =
      !subchain.rounds.empty() && subchain.rounds.back().mode == RoundMode::kAsync;
  if (!secondary_round || subchain.accuracies.empty()) return subchain.phase;
  if (!candidacy_check(state, rule.audits_min, rule.challenges_min)) return subchain.phase;
  if (subchain.accuracies.back() < rule.qualification_floor) return subchain.phase;
  return Phase::kVerification;
}

ShapleyReport estimate(const Scenario& s, std::span<const MinerId> members, Estimator e,
                       const ValueFunction& v) {
  const auto& c = s.config;
  const auto seed = derive_seed(c.master_seed, "valuation", static_cast<std::uint64_t>(e));
  switch (e) {
    case Estimator::kLoo:
      return report_from_values(e, loo_values(members, v));
    case Estimator::kExact:
      return report_from_values(e, exact_shapley(members, v));
    case Estimator::kTmc:
      return tmc_shapley(members, v, c.truncation_tol, c.sv_permutations, seed);
    case Estimator::kGShapley: {
      GShapleyGame game;
      game.ds = &s.ds;
      game.holdout = s.holdout;
      game.params0 = s.params0;
      for (auto m : members) {
        game.shards[m] = s.shards.at(m.value);
        game.learning_rates[m] = c.learning_rate;
      }
      return g_shapley(members, game, c.sv_permutations, seed);
    }
  }
  throw Error(ErrorCode::kBadParams, "unknown estimator");
}

PoolValuation valuate_pool(const Scenario& s, const CorePool& pool,
                           std::span<const Estimator> estimators) {
  const auto& c = s.config;
  auto setup = std::make_shared<FederatedValueSetup>();
  setup->ds = &s.ds;
  for (auto m : pool.members) setup->shards[m] = s.shards.at(m.value);
  setup->holdout = s.holdout;
  setup->params0 = s.params0;
  setup->rounds = c.value_rounds;
  setup->local_epochs = c.local_epochs;
  setup->learning_rate = c.learning_rate;
  setup->seed = derive_seed(c.master_seed, "value-function");
  const ValueFunction v = make_federated_value(setup);

  PoolValuation out;
  out.pool = pool.id;
  out.members = pool.members;
  out.full_accuracy = v(pool.members);
  out.empty_accuracy = v({});
  for (auto e : estimators) {
    if (out.reports.contains(e)) continue;
    auto report = estimate(s, pool.members, e, v);
    ShrinkCurve curve;
    curve.descending =
        pool_shrink_experiment(reservation_order(report, ReservationOrder::kDescending), v);
    curve.ascending =
        pool_shrink_experiment(reservation_order(report, ReservationOrder::kAscending), v);
    out.shrink[e] = std::move(curve);
    out.reports[e] = std::move(report);
  }
  return out;
}

namespace {

class BlockRunner {
 public:
  explicit BlockRunner(const ScenarioConfig& config) : s_(prepare_scenario(config)) {
    const auto& c = s_.config;
    report_.config = c;
    report_.pools_formed = s_.pools.size();
    for (const auto& e : s_.formation) trace(formation_line(e));
    for (const auto& pool : s_.pools) {
      trace({{"event", "POOL"},
             {"subchain", pool.id.value},
             {"members", ids(pool.members)},
             {"host", pool.host.value}});
      live_.push_back(make_subchain(pool, s_.params0, s_.anchor));
      next_id_ = std::max(next_id_, pool.id.value + 1);
    }
    data_value_ = standalone_values();
  }

  ScenarioReport run() {
    const auto& c = s_.config;
    for (std::uint32_t k = 0; k < c.max_sub_blocks; ++k) {
      clock_.sub_block_index = k;
      clock_.now = static_cast<Millis>(k) * c.sub_block_time;
      const auto trained = train_round();
      verify(trained);
      seal();
      advance(trained);
      if (k + 1 == c.core_rounds) enter_secondary();
      const bool active = std::any_of(live_.begin(), live_.end(), [](const Subchain& sc) {
        return sc.phase == Phase::kCore || sc.phase == Phase::kSecondary;
      });
      if (!active) break;
    }
    finish();
    return std::move(report_);
  }

 private:
  void trace(nlohmann::json line) {
    line["t"] = clock_.now;
    report_.trace.push_back(std::move(line));
  }

  static bool trains(const Subchain& sc) {
    return sc.phase == Phase::kCore || sc.phase == Phase::kSecondary;
  }

  // Accuracy gain of one gradient step on a miner's shard from the initial
  // model: the per-miner data value used to rank subchains when scheduling.
  std::vector<double> standalone_values() const {
    std::vector<double> out(s_.shards.size());
    const double base = evaluate(s_.params0, s_.ds, s_.holdout);
    for (std::size_t m = 0; m < s_.shards.size(); ++m) {
      const auto step = gradient_step(s_.params0, s_.ds, s_.shards[m], s_.config.learning_rate);
      ModelParams p = s_.params0;
      for (std::size_t i = 0; i < p.values.size(); ++i) p.values[i] += step.delta[i];
      out[m] = evaluate(p, s_.ds, s_.holdout) - base;
    }
    return out;
  }

  // Per miner: which subchains fit in this sub-block.
  std::map<SubchainId, std::vector<MinerId>> schedule() {
    const auto& c = s_.config;
    std::map<MinerId, std::vector<const Subchain*>> memberships;
    for (const auto& sc : live_) {
      if (!trains(sc)) continue;
      for (auto m : sc.members) memberships[m].push_back(&sc);
    }
    std::map<SubchainId, std::vector<MinerId>> scheduled;
    for (const auto& [m, subs] : memberships) {
      std::map<SubchainId, double> sv;
      std::map<SubchainId, Millis> time;
      for (const auto* sc : subs) {
        double total = 0.0;
        for (auto j : sc->members) {
          if (j != m) total += data_value_[j.value];
        }
        sv[sc->id] = total;
        time[sc->id] = s_.topo->response_time(sc->host, m);
      }
      const auto chosen = schedule_subchains(sv, time, c.sub_block_time);
      for (auto id : chosen) scheduled[id].push_back(m);
      if (chosen.size() < subs.size()) {
        trace({{"event", "SCHEDULE_TRUNCATED"},
               {"miner", m.value},
               {"kept", chosen.size()},
               {"subchains", subs.size()}});
      }
    }
    return scheduled;
  }

  std::vector<SubchainId> train_round() {
    const auto& c = s_.config;
    const auto scheduled = schedule();
    RoundContext ctx{s_.ds,           s_.shards,     *s_.topo,
                     c.local_epochs,  c.learning_rate, c.master_seed,
                     clock_.now};
    std::vector<SubchainId> trained;
    for (auto& sc : live_) {
      if (!trains(sc)) continue;
      auto it = scheduled.find(sc.id);
      if (it == scheduled.end() || it->second.empty()) {
        trace({{"event", "IDLE"}, {"subchain", sc.id.value}});
        continue;
      }
      const auto rec = run_global_round(sc, ctx, it->second);
      const double acc = evaluate(sc.model, s_.ds, s_.holdout);
      sc.accuracies.push_back(acc);
      trained.push_back(sc.id);
      trace({{"event", "ROUND"},
             {"subchain", sc.id.value},
             {"round", rec.round},
             {"mode", rec.mode == RoundMode::kSync ? "SYNC" : "ASYNC"},
             {"contributors", ids(rec.contributors)},
             {"post_hash", to_hex(rec.post_hash)},
             {"accuracy", acc}});
    }
    return trained;
  }

  Subchain* find_live(SubchainId id) {
    for (auto& sc : live_) {
      if (sc.id == id) return &sc;
    }
    return nullptr;
  }

  void verify(const std::vector<SubchainId>& trained) {
    const auto& c = s_.config;
    const auto period = clock_.sub_block_index;
    std::vector<Subchain*> targets;
    for (auto id : trained) {
      auto* sc = find_live(id);
      if (sc->phase == Phase::kSecondary) targets.push_back(sc);
    }
    if (targets.empty()) return;

    // Type Two: a few data contributors challenge the subchains they can see.
    std::vector<std::uint32_t> miners(c.miner_count);
    for (std::uint32_t i = 0; i < c.miner_count; ++i) miners[i] = i;
    Rng pick(derive_seed(c.master_seed, "challenge-issuers", period));
    pick.shuffle(std::span<std::uint32_t>(miners));
    const auto issuers = std::min<std::size_t>(c.challenge_issuers, miners.size());
    for (std::size_t i = 0; i < issuers; ++i) {
      const MinerId issuer{miners[i]};
      std::vector<SubchainId> visible;
      for (auto* sc : targets) {
        if (!sc->contains(issuer) && s_.topo->visible(issuer, sc->host)) visible.push_back(sc->id);
      }
      if (visible.empty()) continue;
      const auto set = generate_challenge(registry_, s_.shards[issuer.value], period,
                                          c.challenge_subsets, c.challenge_subset_size, visible,
                                          derive_seed(c.master_seed, "challenge"));
      for (const auto& [id, subset] : set.assignment) {
        auto* sc = find_live(id);
        const auto& tx = respond_challenge(*sc, set, s_.ds, report_.verification);
        trace({{"event", "CHALLENGE"},
               {"subchain", id.value},
               {"issuer", issuer.value},
               {"period", period},
               {"subset", subset},
               {"accuracy", *decode_challenge_result(tx.result)}});
      }
    }

    // Type Three: one seeded non-member replays each subchain's history.
    ReplayContext replay{s_.ds, s_.shards, c.local_epochs, c.learning_rate};
    for (auto* sc : targets) {
      std::vector<MinerId> outsiders;
      for (std::uint32_t i = 0; i < c.miner_count; ++i) {
        if (!sc->contains(MinerId{i})) outsiders.push_back(MinerId{i});
      }
      Rng rng(derive_seed(c.master_seed, "auditor", sc->id.value, period));
      const MinerId auditor =
          outsiders.empty() ? sc->host : outsiders[rng.below(outsiders.size())];
      const auto outcome =
          audit_replay(*sc, sc->rounds, replay, auditor, report_.verification);
      nlohmann::json line{{"event", "AUDIT"},
                          {"subchain", sc->id.value},
                          {"auditor", auditor.value},
                          {"result", outcome.passed ? "PASS" : "FAIL"}};
      if (!outcome.passed) line["failed_round"] = outcome.failed_round;
      trace(std::move(line));
    }
  }

  void seal() {
    for (auto& sc : live_) {
      if (!trains(sc) && sc.pending.empty()) continue;
      const auto& block = sc.seal_sub_block();
      trace({{"event", "SEAL"},
             {"subchain", sc.id.value},
             {"index", block.index},
             {"transactions", block.payload.size()},
             {"hash", to_hex(block.hash)}});
    }
  }

  void advance(const std::vector<SubchainId>& trained) {
    const auto& c = s_.config;
    const AdvanceRule rule{c.audits_min, c.challenges_min, c.qualification_floor};
    for (auto id : trained) {
      auto* sc = find_live(id);
      const auto next = advance_phase(*sc, report_.verification.subchains[id], rule);
      if (next != sc->phase) {
        sc->phase = next;
        trace({{"event", "PHASE"}, {"subchain", id.value}, {"phase", to_string(next)}});
      }
    }
  }

  void enter_secondary() {
    const auto& c = s_.config;
    std::vector<PoolHead> heads;
    for (const auto& sc : live_) {
      if (sc.phase == Phase::kCore) heads.push_back({sc.id, sc.host});
    }
    FormationTrace ptrace;
    const auto& topo = *s_.topo;
    const auto partnerships = form_partnerships(
        heads, [&](MinerId a, MinerId b) { return topo.response_time(a, b); }, c.sub_block_time,
        c.partnership_threshold, c.partnership_cap, &ptrace);
    for (const auto& e : ptrace) {
      auto line = formation_line(e);
      line["scope"] = "partnership";
      trace(std::move(line));
    }

    std::set<SubchainId> partnered;
    for (const auto& p : partnerships) partnered.insert(p.pools.begin(), p.pools.end());
    for (auto& sc : live_) {
      if (partnered.contains(sc.id)) {
        sc.retired = true;
        retired_.push_back(sc);
      }
    }
    auto merged = split_merge(live_, partnerships, next_id_);
    next_id_ += static_cast<std::uint32_t>(partnerships.size());
    for (auto& sc : merged) {
      if (sc.phase == Phase::kCore) sc.phase = Phase::kSecondary;
      nlohmann::json line{{"event", "PHASE"},
                          {"subchain", sc.id.value},
                          {"phase", to_string(sc.phase)}};
      if (!sc.parents.empty()) {
        std::vector<std::uint32_t> parents;
        for (auto p : sc.parents) parents.push_back(p.value);
        line["parents"] = parents;
        line["members"] = ids(sc.members);
        line["host"] = sc.host.value;
      }
      trace(std::move(line));
    }
    live_ = std::move(merged);
  }

  void finish() {
    std::vector<CandidateView> views;
    for (const auto& sc : live_) {
      auto it = report_.verification.subchains.find(sc.id);
      views.push_back({sc.id, sc.phase,
                       it == report_.verification.subchains.end()
                           ? std::vector<double>{}
                           : it->second.challenge_accuracies});
    }
    try {
      report_.winner = select_winner(views);
      trace({{"event", "WINNER"}, {"subchain", report_.winner->value}});
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNoCandidate) throw;
      trace({{"event", "NO_CANDIDATE"}});
    }

    for (auto& sc : retired_) report_.subchains.push_back(std::move(sc));
    for (auto& sc : live_) report_.subchains.push_back(std::move(sc));
    std::sort(report_.subchains.begin(), report_.subchains.end(),
              [](const Subchain& a, const Subchain& b) { return a.id < b.id; });

    const SubchainId record_id = report_.winner.value_or(s_.pools.front().id);
    for (const auto& sc : report_.subchains) {
      if (sc.id == record_id) report_.main_record = sc.ledger;
    }

    std::vector<Estimator> estimators = s_.config.report_estimators;
    if (std::find(estimators.begin(), estimators.end(), s_.config.sv_estimator) ==
        estimators.end()) {
      estimators.push_back(s_.config.sv_estimator);
    }
    report_.demo = valuate_pool(s_, s_.pools.front(), estimators);
  }

  Scenario s_;
  ScenarioReport report_;
  SimClock clock_;
  std::vector<Subchain> live_;
  std::vector<Subchain> retired_;
  std::vector<double> data_value_;
  ChallengeRegistry registry_;
  std::uint32_t next_id_ = 0;
};

}  // namespace

ScenarioReport run_block(const ScenarioConfig& config) { return BlockRunner(config).run(); }

}  // namespace poflsc
