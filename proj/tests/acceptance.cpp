// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "poflsc/config.hpp"
#include "poflsc/fedavg.hpp"
#include "poflsc/learner.hpp"
#include "poflsc/ledger.hpp"
#include "poflsc/pool_formation.hpp"
#include "poflsc/sim.hpp"
#include "poflsc/valuation.hpp"
#include "poflsc/verification.hpp"
#include "support.hpp"

using namespace poflsc;
namespace fs = std::filesystem;

namespace {

const fs::path kDemo = fs::path(POFLSC_SOURCE_DIR) / "configs" / "demo.toml";

struct Verdict {
  bool pass = true;
  std::string detail;

  void fail(const std::string& why) {
    if (pass) detail = why;
    pass = false;
  }
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double trapezoid(const std::vector<ShrinkPoint>& curve) {
  double area = 0.0;
  for (std::size_t i = 0; i + 1 < curve.size(); ++i) {
    const double width = static_cast<double>(curve[i].size) - static_cast<double>(curve[i + 1].size);
    area += 0.5 * width * (curve[i].accuracy + curve[i + 1].accuracy);
  }
  return area;
}

// 1. Reservation-order dominance on the 100-miner demonstration scenario.
Verdict reservation_dominance() {
  Verdict v;
  const auto config = load_config(kDemo);
  const auto s = prepare_scenario(config);
  const auto& pool = s.pools.front();
  if (pool.members.size() != 20) v.fail("demo pool has " + std::to_string(pool.members.size()) + " members");
  const std::vector<Estimator> estimators{Estimator::kLoo, Estimator::kGShapley};
  const auto val = valuate_pool(s, pool, estimators);
  std::string detail;
  for (auto e : estimators) {
    const auto& c = val.shrink.at(e);
    std::size_t sizes = 0, dominated = 0;
    for (std::size_t i = 0; i < c.descending.size(); ++i) {
      if (c.descending[i].size < 2) continue;
      ++sizes;
      if (c.descending[i].accuracy >= c.ascending[i].accuracy) ++dominated;
    }
    const double frac = static_cast<double>(dominated) / static_cast<double>(sizes);
    const double ad = trapezoid(c.descending), aa = trapezoid(c.ascending);
    detail += std::string(to_string(e)) + fmt(" desc>=asc at %.3f of sizes, AUC %.4f vs %.4f; ", frac, ad, aa);
    if (frac < 0.8) v.fail(std::string(to_string(e)) + fmt(": dominance fraction %.3f < 0.8", frac));
    if (!(ad > aa)) v.fail(std::string(to_string(e)) + fmt(": AUC %.4f not above %.4f", ad, aa));
  }
  if (v.pass) v.detail = detail + fmt("v(N)=%.4f, v(empty)=%.4f", val.full_accuracy, val.empty_accuracy);
  return v;
}

// 2. Shapley estimators on 5-member games with the federated value function.
Verdict shapley_correctness() {
  Verdict v;
  const auto config = load_config(kDemo);
  const auto s = prepare_scenario(config);
  const auto& members = s.pools.front().members;

  auto setup_for = [&](const std::vector<MinerId>& game) {
    auto setup = std::make_shared<FederatedValueSetup>();
    setup->ds = &s.ds;
    for (MinerId m : game) setup->shards[m] = s.shards[m.value];
    setup->holdout = s.holdout;
    setup->params0 = s.params0;
    setup->rounds = config.value_rounds;
    setup->local_epochs = config.local_epochs;
    setup->learning_rate = config.learning_rate;
    setup->seed = derive_seed(config.master_seed, "acceptance-value");
    return setup;
  };

  double worst_tmc = 0.0, worst_eff = 0.0;
  for (std::size_t g = 0; g < 4; ++g) {
    std::vector<MinerId> game(members.begin() + static_cast<std::ptrdiff_t>(5 * g),
                              members.begin() + static_cast<std::ptrdiff_t>(5 * g + 5));
    const auto value = make_federated_value(setup_for(game));
    const auto exact = exact_shapley(game, value);
    const auto tmc = tmc_shapley(game, value, 0.0, 2000, 100 + g);
    double sum = 0.0;
    for (const auto& e : tmc.entries) {
      worst_tmc = std::max(worst_tmc, std::abs(e.mean - exact.at(e.miner)));
      sum += exact.at(e.miner);
    }
    const double span = value(game) - value(std::span<const MinerId>{});
    worst_eff = std::max(worst_eff, std::abs(sum - span));
  }
  if (worst_tmc > 0.03) v.fail(fmt("TMC off exact by %.4f > 0.03", worst_tmc));
  if (worst_eff > 1e-9) v.fail(fmt("efficiency gap %.3g > 1e-9", worst_eff));

  // Symmetry: miner b holds a copy of miner a's shard. Null player: miner z
  // holds no data, so its update carries zero weight.
  std::vector<MinerId> game(members.begin(), members.begin() + 5);
  auto setup = setup_for(game);
  setup->shards[game[3]].indices = setup->shards[game[1]].indices;
  setup->shards[game[4]].indices.clear();
  const auto value = make_federated_value(setup);
  const auto sv = exact_shapley(game, value);
  if (sv.at(game[1]) != sv.at(game[3])) {
    v.fail(fmt("symmetric miners differ: %.17g vs %.17g", sv.at(game[1]), sv.at(game[3])));
  }
  if (sv.at(game[4]) != 0.0) v.fail(fmt("null player has SV %.3g", sv.at(game[4])));

  // LOO equals exact SV on additive games.
  Rng rng(404);
  double worst_loo = 0.0;
  for (int t = 0; t < 50; ++t) {
    std::map<MinerId, double> w;
    std::vector<MinerId> ids;
    for (std::uint32_t i = 0; i < 5; ++i) {
      ids.push_back(MinerId{i * 7 + 1});
      w[ids.back()] = rng.uniform(-0.2, 0.5);
    }
    auto additive = [&](std::span<const MinerId> c) {
      double x = 0.0;
      for (MinerId m : c) x += w.at(m);
      return x;
    };
    const auto loo = loo_values(ids, additive);
    const auto ex = exact_shapley(ids, additive);
    for (MinerId m : ids) worst_loo = std::max(worst_loo, std::abs(loo.at(m) - ex.at(m)));
  }
  if (worst_loo > 1e-9) v.fail(fmt("LOO differs from exact by %.3g", worst_loo));
  if (v.pass) {
    v.detail = fmt("max |TMC-exact| %.4f, efficiency gap %.2g, LOO gap %.2g, symmetry and null exact",
                   worst_tmc, worst_eff, worst_loo);
  }
  return v;
}

// 3. FedAvg identities.
Verdict fedavg_identities() {
  Verdict v;
  Rng rng(31);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t dim = 1 + rng.below(20);
    ModelParams p{{dim, 0, 1}, std::vector<double>(dim)};
    for (auto& x : p.values) x = rng.normal();
    std::vector<double> delta(dim);
    for (auto& x : delta) x = rng.normal();

    // k identical deltas aggregate to that delta.
    const std::size_t k = 1 + rng.below(10);
    std::vector<GradientUpdate> same;
    for (std::uint32_t m = 0; m < k; ++m) same.push_back({MinerId{m}, delta, 1 + rng.below(50), 0, 0});
    const auto agg = aggregate_sync(p, same);
    for (std::size_t i = 0; i < dim; ++i) {
      worst = std::max(worst, std::abs(agg.values[i] - (p.values[i] + delta[i])));
    }

    // Weighted mean against direct arithmetic.
    std::vector<GradientUpdate> mixed;
    double total = 0.0;
    for (std::uint32_t m = 0; m < k; ++m) {
      std::vector<double> d(dim);
      for (auto& x : d) x = rng.normal();
      mixed.push_back({MinerId{m}, d, 1 + rng.below(50), 0, 0});
      total += static_cast<double>(mixed.back().samples_used);
    }
    const auto out = aggregate_sync(p, mixed);
    for (std::size_t i = 0; i < dim; ++i) {
      long double expect = p.values[i];
      for (const auto& u : mixed) {
        expect += static_cast<long double>(u.samples_used) / total * u.delta[i];
      }
      worst = std::max(worst, static_cast<double>(std::abs(out.values[i] - expect)));
    }

    // Staleness zero equals a one-update synchronous round, bit for bit.
    const GradientUpdate one{MinerId{3}, delta, 1 + rng.below(50), 4, 0};
    const std::vector<GradientUpdate> single{one};
    if (apply_async(p, one, 4).values != aggregate_sync(p, single).values) {
      v.fail("async staleness 0 differs from sync single update");
    }
  }
  if (worst > 1e-12) v.fail(fmt("aggregation error %.3g > 1e-12", worst));
  if (v.pass) v.detail = fmt("200 instances, max error %.2g", worst);
  return v;
}

double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-8});
}

// 4. Analytic gradients against central differences.
Verdict gradient_check() {
  Verdict v;
  Rng rng(2024);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t dim = 1 + rng.below(6);
    const int classes = 2 + static_cast<int>(rng.below(4));
    const std::size_t hidden = t % 2 == 0 ? 0 : 1 + rng.below(5);
    const std::size_t n = 1 + rng.below(8);
    Dataset ds{dim, classes, std::vector<double>(n * dim), std::vector<int>(n)};
    for (auto& x : ds.features) x = rng.normal();
    for (auto& y : ds.labels) y = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
    ModelParams p = init_params({dim, hidden, classes}, 0);
    for (auto& x : p.values) x = rng.normal(0.0, 0.7);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<double> grad;
    (void)loss_and_gradient(p, ds, idx, grad);
    auto f = [&](const std::vector<double>& values) {
      std::vector<double> unused;
      return loss_and_gradient(ModelParams{p.spec, values}, ds, idx, unused);
    };
    worst = std::max(worst, relative_error(grad, oracle::finite_difference(f, p.values, 1e-5)));
  }
  if (worst > 1e-4) v.fail(fmt("relative error %.3g > 1e-4", worst));
  if (v.pass) v.detail = fmt("100 instances, max relative error %.2g", worst);
  return v;
}

// 5. Single-bit tampers and transaction round trips.
Verdict ledger_integrity() {
  Verdict v;
  const auto chain = support::random_chain(555, 10);
  if (!verify_chain(chain).ok) v.fail("fresh chain does not verify");
  const auto bytes = serialize_chain(chain);
  Rng rng(556);
  std::size_t by_parse = 0, by_verify = 0;
  for (int t = 0; t < 1000; ++t) {
    auto tampered = bytes;
    const auto bit = rng.below(tampered.size() * 8);
    tampered[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    try {
      const auto parsed = parse_chain(tampered);
      if (verify_chain(parsed).ok) {
        v.fail("undetected flip of bit " + std::to_string(bit));
      } else {
        ++by_verify;
      }
    } catch (const Error&) {
      ++by_parse;
    }
  }
  std::size_t mismatches = 0;
  for (std::uint64_t i = 0; i < 10000; ++i) {
    const auto tx = support::random_tx(rng, i);
    const auto bytes_tx = canonical_serialize(tx);
    if (parse_transaction(bytes_tx) != tx || canonical_serialize(parse_transaction(bytes_tx)) != bytes_tx) {
      ++mismatches;
    }
  }
  if (mismatches > 0) v.fail(std::to_string(mismatches) + " transaction round trips differ");
  if (v.pass) {
    v.detail = "1000/1000 tampers detected (" + std::to_string(by_verify) + " by verify_chain, " +
               std::to_string(by_parse) + " rejected by the parser); 10000 round trips exact";
  }
  return v;
}

// 6. Audit replay of a full scenario, and 1-ulp perturbations.
Verdict audit_replay_check() {
  Verdict v;
  const auto config = load_config(kDemo);
  const auto report = run_block(config);
  const auto s = prepare_scenario(config);
  const ReplayContext ctx{s.ds, s.shards, config.local_epochs, config.learning_rate};
  std::size_t rounds = 0;
  for (const auto& sc : report.subchains) {
    const auto out = replay_rounds(sc.initial_model, sc.rounds, ctx);
    if (!out.passed) {
      v.fail("subchain " + std::to_string(sc.id.value) + " failed replay at round " +
             std::to_string(out.failed_round));
    }
    rounds += sc.rounds.size();
  }

  Rng rng(606);
  std::size_t trials = 0;
  for (int round = 0; round < 5; ++round) {
    for (int ulps : {1, 2, 1000}) {
      support::TrainingFixture f;
      const auto miner = MinerId{static_cast<std::uint32_t>(rng.below(8))};
      const auto coord = rng.below(f.sc.model.values.size());
      auto tamper = [&](GradientUpdate& u) {
        if (u.miner != miner) return;
        double& x = u.delta[coord];
        for (int i = 0; i < ulps; ++i) x = std::nextafter(x, INFINITY);
      };
      f.train(3, 2, tamper, round);
      const auto out = replay_rounds(f.sc.initial_model, f.sc.rounds, f.replay());
      ++trials;
      if (out.passed || out.failed_round != static_cast<std::uint64_t>(round)) {
        v.fail("perturbation at round " + std::to_string(round) + " by " + std::to_string(ulps) +
               " ulp not caught there");
      }
    }
  }
  if (v.pass) {
    v.detail = std::to_string(report.subchains.size()) + " subchains, " + std::to_string(rounds) +
               " rounds replayed; " + std::to_string(trials) + " perturbed histories fail at the right round";
  }
  return v;
}

// 7. Candidate lists against the step-by-step rule.
Verdict candidate_list_oracle() {
  Verdict v;
  Rng rng(707);
  for (int t = 0; t < 1000; ++t) {
    const auto n = 1 + rng.below(25);
    const double t_sub = rng.uniform(1.0, 120.0);
    std::map<MinerId, Millis> rts;
    std::map<std::uint32_t, double> plain;
    std::vector<std::uint32_t> order;
    for (std::uint32_t i = 1; i <= n; ++i) {
      const double rt = t % 3 == 0 ? std::floor(rng.uniform(1.0, 20.0)) : rng.uniform(0.5, 30.0);
      rts[MinerId{i}] = rt;
      plain[i] = rt;
      order.push_back(i);
    }
    rng.shuffle(std::span(order));
    std::vector<MinerId> arrival;
    for (auto i : order) arrival.push_back(MinerId{i});
    const auto got = build_candidate_list(MinerId{0}, rts, t_sub, arrival);
    const auto want = oracle::candidate_list(plain, t_sub, order);
    bool same = got.entries.size() == want.size();
    for (std::size_t k = 0; same && k < want.size(); ++k) {
      same = got.entries[k].id.value == want[k].id && got.entries[k].rt == want[k].rt;
    }
    if (!same) v.fail("instance " + std::to_string(t) + " differs from the oracle");
    if (!(got.total() <= t_sub || got.entries.size() == 1)) {
      v.fail("instance " + std::to_string(t) + " exceeds T_sub with several entries");
    }
  }
  if (v.pass) v.detail = "1000 instances identical; sum <= T_sub or singleton throughout";
  return v;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// 8. Two CLI runs, byte-identical outputs.
Verdict cli_determinism() {
  Verdict v;
  const auto work = fs::temp_directory_path() / "poflsc_acceptance";
  fs::remove_all(work);
  for (const char* run : {"a", "b"}) {
    const std::string cmd = std::string(POFLSC_CLI) + " simulate --config " + kDemo.string() +
                            " --out " + (work / run).string() + " > /dev/null";
    const int status = std::system(cmd.c_str());
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) v.fail(std::string("run ") + run + " failed");
  }
  std::size_t total = 0;
  for (const char* f : {"report.json", "chain.bin", "trace.jsonl"}) {
    const auto a = slurp(work / "a" / f), b = slurp(work / "b" / f);
    if (a.empty() || a != b) v.fail(std::string(f) + " differs between runs");
    total += a.size();
  }
  fs::remove_all(work);
  if (v.pass) v.detail = "report.json, chain.bin, trace.jsonl identical (" + std::to_string(total) + " bytes)";
  return v;
}

}  // namespace

int main() {
  using Clock = std::chrono::steady_clock;
  const std::vector<std::pair<const char*, Verdict (*)()>> criteria{
      {"reservation-order dominance", reservation_dominance},
      {"Shapley correctness", shapley_correctness},
      {"FedAvg identities", fedavg_identities},
      {"gradient check", gradient_check},
      {"ledger integrity", ledger_integrity},
      {"audit replay", audit_replay_check},
      {"candidate-list oracle", candidate_list_oracle},
      {"CLI determinism", cli_determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = Clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v.fail(std::string("threw: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    std::printf("%s %zu %s: %s [%.1fs]\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                v.detail.c_str(), secs);
    std::fflush(stdout);
    failed += v.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
