#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "poflsc/learner.hpp"
#include "poflsc/round_record.hpp"
#include "poflsc/topology.hpp"

namespace poflsc {

struct Subchain;

// params + sum_i w_i * delta_i with w_i = samples_used_i / sum samples_used,
// summed in ascending MinerId order.
ModelParams aggregate_sync(const ModelParams& params, std::span<const GradientUpdate> updates);

double staleness_weight(std::uint64_t staleness);

// params + delta / (1 + staleness), staleness = current_version - update.round.
ModelParams apply_async(const ModelParams& params, const GradientUpdate& update,
                        std::uint64_t current_version);

// Applies a round's updates (already in application order) the way the
// subchain manager does for the given mode.
ModelParams apply_round(const ModelParams& pre, RoundMode mode, std::uint64_t base_version,
                        std::span<const GradientUpdate> ordered);

Digest updates_hash(std::span<const GradientUpdate> ordered);

std::uint64_t local_training_seed(std::uint64_t master_seed, SubchainId subchain,
                                  std::uint64_t round, MinerId miner);

struct RoundContext {
  const Dataset& ds;
  std::span<const Shard> shards;  // indexed by MinerId
  const Topology& topo;
  int local_epochs = 1;
  double learning_rate = 0.1;
  std::uint64_t master_seed = 0;
  Millis round_start = 0.0;
};

// Hook for fault injection: may rewrite an update after local training.
using UpdateTamper = std::function<void(GradientUpdate&)>;

// One global communication round. CORE aggregates synchronously; later phases
// apply updates asynchronously in simulated arrival order. Appends one
// TRAINING activation per contributor to the subchain's pending payload.
RoundRecord run_global_round(Subchain& subchain, const RoundContext& ctx,
                             std::span<const MinerId> scheduled,
                             const UpdateTamper& tamper = {});

}  // namespace poflsc
