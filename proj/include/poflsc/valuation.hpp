#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "poflsc/learner.hpp"
#include "poflsc/types.hpp"

namespace poflsc {

enum class Estimator { kLoo, kTmc, kGShapley, kExact };
enum class ReservationOrder { kDescending, kAscending };

std::string_view to_string(Estimator e);
std::string_view to_string(ReservationOrder o);
// Case-insensitive; accepts loo, tmc, gshapley / g-shapley, exact.
std::optional<Estimator> parse_estimator(std::string_view name);
std::optional<ReservationOrder> parse_order(std::string_view name);

// Performance of a coalition (ascending member ids). Must be deterministic.
using ValueFunction = std::function<double(std::span<const MinerId>)>;

// Thread-safe memo over a deterministic value function.
class CachedValue {
 public:
  explicit CachedValue(ValueFunction inner) : inner_(std::move(inner)) {}

  double operator()(std::span<const MinerId> coalition) const;
  std::size_t evaluations() const;

 private:
  ValueFunction inner_;
  mutable std::mutex mutex_;
  mutable std::map<std::vector<MinerId>, double> memo_;
};

// Federated retrain of a coalition's shards from params0 followed by
// held-out accuracy. Members are processed in shard-content order and
// training seeds are keyed by shard content, so miners holding identical
// shards are interchangeable.
struct FederatedValueSetup {
  const Dataset* ds = nullptr;
  std::map<MinerId, Shard> shards;
  std::vector<std::size_t> holdout;
  ModelParams params0;
  int rounds = 5;
  int local_epochs = 1;
  double learning_rate = 0.1;
  std::uint64_t seed = 0;
};

double federated_value(const FederatedValueSetup& setup, std::span<const MinerId> coalition);

// Cached ValueFunction over a shared setup.
ValueFunction make_federated_value(std::shared_ptr<const FederatedValueSetup> setup);

struct ShapleyEntry {
  MinerId miner;
  double mean = 0.0;
  double std = 0.0;
};

struct ShapleyReport {
  Estimator estimator = Estimator::kLoo;
  std::vector<ShapleyEntry> entries;  // ascending miner id
  std::size_t iterations = 1;

  const ShapleyEntry* find(MinerId m) const;
};

// Brute force over all 2^n coalitions; n <= 10.
std::map<MinerId, double> exact_shapley(std::span<const MinerId> members, const ValueFunction& v);

std::map<MinerId, double> loo_values(std::span<const MinerId> members, const ValueFunction& v);

// Truncated Monte Carlo: each permutation's walk stops once the prefix value
// is within truncation_tol of v(N); later members get zero marginal. The first
// marginal of every permutation is always evaluated.
ShapleyReport tmc_shapley(std::span<const MinerId> members, const ValueFunction& v,
                          double truncation_tol, std::size_t max_permutations, std::uint64_t seed);

struct GShapleyGame {
  const Dataset* ds = nullptr;
  std::map<MinerId, Shard> shards;
  std::vector<std::size_t> holdout;
  ModelParams params0;
  std::map<MinerId, double> learning_rates;  // per member
};

// Along each permutation every member applies one full-batch gradient step
// on its shard to the running model; its marginal is the accuracy change.
ShapleyReport g_shapley(std::span<const MinerId> members, const GShapleyGame& game,
                        std::size_t permutations, std::uint64_t seed);

ShapleyReport report_from_values(Estimator e, const std::map<MinerId, double>& values);

// DESCENDING reserves the highest mean first; ties go to the lower id.
std::vector<MinerId> reservation_order(const ShapleyReport& report, ReservationOrder direction);

struct ShrinkPoint {
  std::size_t size = 0;
  double accuracy = 0.0;
};

// v on the top-k prefix of `order` for k = |order| down to 1.
std::vector<ShrinkPoint> pool_shrink_experiment(std::span<const MinerId> order,
                                                const ValueFunction& v);

}  // namespace poflsc
