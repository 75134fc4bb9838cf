#include "poflsc/valuation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <string>

#include "poflsc/crypto.hpp"
#include "poflsc/error.hpp"
#include "poflsc/fedavg.hpp"
#include "poflsc/parallel.hpp"
#include "poflsc/rng.hpp"

namespace poflsc {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<MinerId> sorted_members(std::span<const MinerId> members) {
  std::vector<MinerId> out(members.begin(), members.end());
  std::sort(out.begin(), out.end());
  return out;
}

struct MeanStd {
  double mean;
  double std;
};

MeanStd summarize(std::span<const double> xs) {
  if (xs.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

// marginals[p][k]: contribution of members[k] in permutation p.
ShapleyReport report_from_marginals(Estimator e, const std::vector<MinerId>& members,
                                    const std::vector<std::vector<double>>& marginals) {
  ShapleyReport report{e, {}, marginals.size()};
  std::vector<double> column(marginals.size());
  for (std::size_t k = 0; k < members.size(); ++k) {
    for (std::size_t p = 0; p < marginals.size(); ++p) column[p] = marginals[p][k];
    const auto s = summarize(column);
    report.entries.push_back({members[k], s.mean, s.std});
  }
  return report;
}

double sum_sorted(std::vector<double> terms) {
  std::sort(terms.begin(), terms.end());
  double sum = 0.0;
  for (double t : terms) sum += t;
  return sum;
}

}  // namespace

std::string_view to_string(Estimator e) {
  switch (e) {
    case Estimator::kLoo: return "LOO";
    case Estimator::kTmc: return "TMC";
    case Estimator::kGShapley: return "GSHAPLEY";
    case Estimator::kExact: return "EXACT";
  }
  return "UNKNOWN";
}

std::string_view to_string(ReservationOrder o) {
  return o == ReservationOrder::kDescending ? "DESCENDING" : "ASCENDING";
}

std::optional<Estimator> parse_estimator(std::string_view name) {
  const auto n = lower(name);
  if (n == "loo") return Estimator::kLoo;
  if (n == "tmc") return Estimator::kTmc;
  if (n == "gshapley" || n == "g-shapley" || n == "g_shapley") return Estimator::kGShapley;
  if (n == "exact") return Estimator::kExact;
  return std::nullopt;
}

std::optional<ReservationOrder> parse_order(std::string_view name) {
  const auto n = lower(name);
  if (n == "descending" || n == "desc") return ReservationOrder::kDescending;
  if (n == "ascending" || n == "asc") return ReservationOrder::kAscending;
  return std::nullopt;
}

double CachedValue::operator()(std::span<const MinerId> coalition) const {
  std::vector<MinerId> key(coalition.begin(), coalition.end());
  std::sort(key.begin(), key.end());
  {
    std::lock_guard lock(mutex_);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
  }
  const double value = inner_(key);
  std::lock_guard lock(mutex_);
  memo_.emplace(std::move(key), value);
  return value;
}

std::size_t CachedValue::evaluations() const {
  std::lock_guard lock(mutex_);
  return memo_.size();
}

double federated_value(const FederatedValueSetup& setup, std::span<const MinerId> coalition) {
  const Dataset& ds = *setup.ds;
  ModelParams model = setup.params0;
  if (coalition.empty()) return evaluate(model, ds, setup.holdout);

  struct Member {
    Digest digest;
    MinerId id;
    const Shard* shard;
  };
  std::vector<Member> members;
  members.reserve(coalition.size());
  for (MinerId m : coalition) {
    auto it = setup.shards.find(m);
    if (it == setup.shards.end()) throw Error(ErrorCode::kUnknownMiner, std::to_string(m.value));
    members.push_back({it->second.digest(), m, &it->second});
  }
  std::sort(members.begin(), members.end(), [](const Member& a, const Member& b) {
    return a.digest != b.digest ? a.digest < b.digest : a.id < b.id;
  });

  std::vector<GradientUpdate> updates(members.size());
  for (int r = 0; r < setup.rounds; ++r) {
    for (std::size_t k = 0; k < members.size(); ++k) {
      const auto seed = derive_seed(setup.seed, "value-train", digest_prefix(members[k].digest),
                                    static_cast<std::uint64_t>(r));
      updates[k] = train_local(model, ds, *members[k].shard, setup.local_epochs,
                               setup.learning_rate, seed);
      // Rank in content order, so aggregation sums in that order.
      updates[k].miner = MinerId{static_cast<std::uint32_t>(k)};
    }
    model = aggregate_sync(model, updates);
  }
  return evaluate(model, ds, setup.holdout);
}

ValueFunction make_federated_value(std::shared_ptr<const FederatedValueSetup> setup) {
  auto cache = std::make_shared<CachedValue>(
      [setup](std::span<const MinerId> c) { return federated_value(*setup, c); });
  return [cache](std::span<const MinerId> c) { return (*cache)(c); };
}

const ShapleyEntry* ShapleyReport::find(MinerId m) const {
  for (const auto& e : entries) {
    if (e.miner == m) return &e;
  }
  return nullptr;
}

std::map<MinerId, double> exact_shapley(std::span<const MinerId> members_in,
                                        const ValueFunction& v) {
  const auto members = sorted_members(members_in);
  const std::size_t n = members.size();
  if (n > 10) {
    throw Error(ErrorCode::kTooManyMembers, std::to_string(n) + " members, exact limit is 10");
  }
  std::map<MinerId, double> out;
  if (n == 0) return out;

  const std::size_t masks = std::size_t{1} << n;
  std::vector<double> value(masks);
  std::vector<MinerId> coalition;
  for (std::size_t mask = 0; mask < masks; ++mask) {
    coalition.clear();
    for (std::size_t k = 0; k < n; ++k) {
      if (mask & (std::size_t{1} << k)) coalition.push_back(members[k]);
    }
    value[mask] = v(coalition);
  }

  // weight[s] = s! (n - s - 1)! / n!
  std::vector<double> weight(n);
  for (std::size_t s = 0; s < n; ++s) {
    double w = 1.0 / static_cast<double>(n);
    for (std::size_t k = 1; k <= s; ++k) {
      w *= static_cast<double>(k) / static_cast<double>(n - k);
    }
    weight[s] = w;
  }

  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t bit = std::size_t{1} << i;
    std::vector<double> terms;
    terms.reserve(masks / 2);
    for (std::size_t mask = 0; mask < masks; ++mask) {
      if (mask & bit) continue;
      const auto s = static_cast<std::size_t>(std::popcount(mask));
      terms.push_back(weight[s] * (value[mask | bit] - value[mask]));
    }
    // Sorting makes the sum independent of enumeration order, so symmetric
    // players come out bit-identical.
    out[members[i]] = sum_sorted(std::move(terms));
  }
  return out;
}

std::map<MinerId, double> loo_values(std::span<const MinerId> members_in, const ValueFunction& v) {
  const auto members = sorted_members(members_in);
  std::map<MinerId, double> out;
  if (members.empty()) return out;
  const double full = v(members);
  std::vector<MinerId> rest;
  for (MinerId m : members) {
    rest.clear();
    for (MinerId o : members) {
      if (o != m) rest.push_back(o);
    }
    out[m] = full - v(rest);
  }
  return out;
}

ShapleyReport tmc_shapley(std::span<const MinerId> members_in, const ValueFunction& v,
                          double truncation_tol, std::size_t max_permutations,
                          std::uint64_t seed) {
  if (max_permutations < 1 || !(truncation_tol >= 0.0)) {
    throw Error(ErrorCode::kBadParams, "tmc_shapley needs permutations >= 1 and tol >= 0");
  }
  const auto members = sorted_members(members_in);
  const std::size_t n = members.size();
  const double full = v(members);
  const double empty = v(std::span<const MinerId>{});

  std::vector<std::vector<double>> marginals(max_permutations, std::vector<double>(n, 0.0));
  parallel_for(max_permutations, [&](std::size_t p) {
    Rng rng(derive_seed(seed, "tmc-permutation", p));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(std::span(perm));

    std::vector<MinerId> prefix;
    double previous = empty;
    for (std::size_t pos = 0; pos < n; ++pos) {
      prefix.push_back(members[perm[pos]]);
      std::sort(prefix.begin(), prefix.end());
      const double current = v(prefix);
      marginals[p][perm[pos]] = current - previous;
      previous = current;
      if (std::abs(current - full) < truncation_tol) break;
    }
  });
  return report_from_marginals(Estimator::kTmc, members, marginals);
}

ShapleyReport g_shapley(std::span<const MinerId> members_in, const GShapleyGame& game,
                        std::size_t permutations, std::uint64_t seed) {
  if (permutations < 1 || game.ds == nullptr) {
    throw Error(ErrorCode::kBadParams, "g_shapley needs permutations >= 1 and a dataset");
  }
  const auto members = sorted_members(members_in);
  const std::size_t n = members.size();
  for (MinerId m : members) {
    if (!game.shards.contains(m) || !game.learning_rates.contains(m)) {
      throw Error(ErrorCode::kBadParams, "no shard or learning rate for miner " +
                                             std::to_string(m.value));
    }
  }
  const double start = evaluate(game.params0, *game.ds, game.holdout);

  std::vector<std::vector<double>> marginals(permutations, std::vector<double>(n, 0.0));
  parallel_for(permutations, [&](std::size_t p) {
    Rng rng(derive_seed(seed, "gshapley-permutation", p));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(std::span(perm));

    ModelParams model = game.params0;
    double previous = start;
    for (std::size_t k : perm) {
      const MinerId m = members[k];
      const double lr = game.learning_rates.at(m);
      if (lr != 0.0) {
        const auto step = gradient_step(model, *game.ds, game.shards.at(m), lr);
        for (std::size_t i = 0; i < model.values.size(); ++i) model.values[i] += step.delta[i];
      }
      const double current = lr != 0.0 ? evaluate(model, *game.ds, game.holdout) : previous;
      marginals[p][k] = current - previous;
      previous = current;
    }
  });
  return report_from_marginals(Estimator::kGShapley, members, marginals);
}

ShapleyReport report_from_values(Estimator e, const std::map<MinerId, double>& values) {
  ShapleyReport report{e, {}, 1};
  for (const auto& [m, v] : values) report.entries.push_back({m, v, 0.0});
  return report;
}

std::vector<MinerId> reservation_order(const ShapleyReport& report, ReservationOrder direction) {
  std::vector<ShapleyEntry> entries = report.entries;
  std::sort(entries.begin(), entries.end(), [direction](const ShapleyEntry& a, const ShapleyEntry& b) {
    if (a.mean != b.mean) {
      return direction == ReservationOrder::kDescending ? a.mean > b.mean : a.mean < b.mean;
    }
    return a.miner < b.miner;
  });
  std::vector<MinerId> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.miner);
  return out;
}

std::vector<ShrinkPoint> pool_shrink_experiment(std::span<const MinerId> order,
                                                const ValueFunction& v) {
  std::vector<ShrinkPoint> curve;
  curve.reserve(order.size());
  for (std::size_t k = order.size(); k >= 1; --k) {
    std::vector<MinerId> prefix(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(prefix.begin(), prefix.end());
    curve.push_back({k, v(prefix)});
  }
  return curve;
}

}  // namespace poflsc
