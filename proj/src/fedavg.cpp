#include "poflsc/fedavg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "poflsc/bytes.hpp"
#include "poflsc/crypto.hpp"
#include "poflsc/error.hpp"
#include "poflsc/events.hpp"
#include "poflsc/rng.hpp"
#include "poflsc/subchain.hpp"

namespace poflsc {
namespace {

void check_update(const ModelParams& params, const GradientUpdate& u) {
  if (u.delta.size() != params.values.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "update from miner " + std::to_string(u.miner.value) + " has " +
                    std::to_string(u.delta.size()) + " values, model has " +
                    std::to_string(params.values.size()));
  }
}

}  // namespace

std::vector<std::uint8_t> canonical_serialize(const RoundRecord& r) {
  ByteWriter w;
  w.u32(r.subchain.value);
  w.u64(r.round);
  w.u8(static_cast<std::uint8_t>(r.mode));
  w.u64(r.base_version);
  w.u32(static_cast<std::uint32_t>(r.contributors.size()));
  for (MinerId m : r.contributors) w.u32(m.value);
  w.u32(static_cast<std::uint32_t>(r.seeds_used.size()));
  for (const auto& [m, seed] : r.seeds_used) {
    w.u32(m.value);
    w.u64(seed);
  }
  w.digest(r.pre_hash);
  w.digest(r.post_hash);
  w.digest(r.updates_hash);
  return std::move(w).take();
}

ModelParams aggregate_sync(const ModelParams& params, std::span<const GradientUpdate> updates) {
  if (updates.empty()) throw Error(ErrorCode::kEmptyRound, "no updates to aggregate");
  std::size_t total = 0;
  for (const auto& u : updates) {
    check_update(params, u);
    total += u.samples_used;
  }
  std::vector<std::size_t> order(updates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return updates[a].miner < updates[b].miner; });

  std::vector<double> sum(params.values.size(), 0.0);
  for (std::size_t k : order) {
    const auto& u = updates[k];
    const double w = total == 0 ? 1.0 / static_cast<double>(updates.size())
                                : static_cast<double>(u.samples_used) / static_cast<double>(total);
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += w * u.delta[i];
  }
  ModelParams out = params;
  for (std::size_t i = 0; i < sum.size(); ++i) out.values[i] += sum[i];
  return out;
}

double staleness_weight(std::uint64_t staleness) {
  return 1.0 / (1.0 + static_cast<double>(staleness));
}

ModelParams apply_async(const ModelParams& params, const GradientUpdate& update,
                        std::uint64_t current_version) {
  check_update(params, update);
  if (update.round > current_version) {
    throw Error(ErrorCode::kStaleNegative, "update trained on version " +
                                               std::to_string(update.round) + " > current " +
                                               std::to_string(current_version));
  }
  const std::uint64_t staleness = current_version - update.round;
  ModelParams out = params;
  if (staleness == 0) {
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += update.delta[i];
  } else {
    const double denom = 1.0 + static_cast<double>(staleness);
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += update.delta[i] / denom;
  }
  return out;
}

ModelParams apply_round(const ModelParams& pre, RoundMode mode, std::uint64_t base_version,
                        std::span<const GradientUpdate> ordered) {
  if (mode == RoundMode::kSync) return aggregate_sync(pre, ordered);
  ModelParams model = pre;
  std::uint64_t version = base_version;
  for (const auto& u : ordered) {
    model = apply_async(model, u, version);
    ++version;
  }
  return model;
}

Digest updates_hash(std::span<const GradientUpdate> ordered) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(ordered.size()));
  for (const auto& u : ordered) {
    w.u32(u.miner.value);
    w.u64(u.round);
    w.u64(u.samples_used);
    w.u64(u.seed);
    w.u64(u.delta.size());
    for (double d : u.delta) w.f64(d);
  }
  return sha256(w.data());
}

std::uint64_t local_training_seed(std::uint64_t master_seed, SubchainId subchain,
                                  std::uint64_t round, MinerId miner) {
  return derive_seed(master_seed, "local-train", subchain.value, round, miner.value);
}

RoundRecord run_global_round(Subchain& subchain, const RoundContext& ctx,
                             std::span<const MinerId> scheduled, const UpdateTamper& tamper) {
  if (scheduled.empty()) {
    throw Error(ErrorCode::kNoContributors, "subchain " + std::to_string(subchain.id.value));
  }
  if (subchain.phase == Phase::kInitial) {
    throw Error(ErrorCode::kBadParams, "subchain has not been established");
  }

  RoundRecord rec;
  rec.subchain = subchain.id;
  rec.round = subchain.rounds.size();
  rec.mode = subchain.phase == Phase::kCore ? RoundMode::kSync : RoundMode::kAsync;
  rec.base_version = subchain.version;
  rec.pre_hash = params_hash(subchain.model);

  // Every scheduled member trains from the current model.
  std::vector<GradientUpdate> updates;
  updates.reserve(scheduled.size());
  for (MinerId m : scheduled) {
    if (m.value >= ctx.shards.size()) throw Error(ErrorCode::kUnknownMiner, std::to_string(m.value));
    const auto seed = local_training_seed(ctx.master_seed, subchain.id, rec.round, m);
    auto u = train_local(subchain.model, ctx.ds, ctx.shards[m.value], ctx.local_epochs,
                         ctx.learning_rate, seed);
    u.miner = m;
    u.round = subchain.version;
    if (tamper) tamper(u);
    rec.seeds_used[m] = seed;
    updates.push_back(std::move(u));
  }

  // Application order: ascending id for sync rounds, arrival order otherwise.
  std::vector<std::size_t> order;
  if (rec.mode == RoundMode::kSync) {
    order.resize(updates.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return updates[a].miner < updates[b].miner;
    });
  } else {
    EventQueue arrivals;
    for (std::size_t k = 0; k < updates.size(); ++k) {
      const MinerId m = updates[k].miner;
      arrivals.push(ctx.round_start + ctx.topo.response_time(subchain.host, m),
                    EventKind::kUpdateArrival, m, k);
    }
    while (!arrivals.empty()) order.push_back(arrivals.pop().payload);
  }
  std::vector<GradientUpdate> ordered;
  ordered.reserve(order.size());
  for (std::size_t k : order) ordered.push_back(std::move(updates[k]));

  subchain.model = apply_round(subchain.model, rec.mode, rec.base_version, ordered);
  subchain.version += rec.mode == RoundMode::kSync ? 1 : ordered.size();
  rec.post_hash = params_hash(subchain.model);
  rec.updates_hash = updates_hash(ordered);

  const auto dependency = subchain.last_training_tx;
  std::uint32_t position = 0;
  for (const auto& u : ordered) {
    rec.contributors.push_back(u.miner);
    ActivationTransaction tx;
    tx.type = ActivationType::kTraining;
    tx.chain_model = {subchain.id, rec.post_hash};
    tx.verifier = {subchain.host, Role::kHost};
    tx.miner = {u.miner, Role::kTrainer};
    tx.data_id = ctx.shards[u.miner.value].digest();
    tx.prev_dependency = dependency;
    tx.result = encode_training_result(u.seed, u.round, position++);
    subchain.last_training_tx = subchain.record(std::move(tx)).tx_number;
  }
  subchain.rounds.push_back(rec);
  return rec;
}

}  // namespace poflsc
