#pragma once

#include <optional>
#include <span>
#include <vector>

#include "poflsc/learner.hpp"
#include "poflsc/ledger.hpp"
#include "poflsc/pool_formation.hpp"
#include "poflsc/round_record.hpp"

namespace poflsc {

// A pool plus its sub-block chain, model state and phase.
struct Subchain {
  SubchainId id;
  std::vector<MinerId> members;  // ascending
  MinerId host;
  Phase phase = Phase::kInitial;

  ModelParams initial_model;
  ModelParams model;
  std::uint64_t version = 0;  // bumps once per sync round or async update

  Chain ledger;
  // Activations gathered during the current sub-block, sealed at its end.
  std::vector<ActivationTransaction> pending;
  std::optional<std::uint64_t> last_training_tx;

  std::vector<RoundRecord> rounds;
  std::vector<double> accuracies;    // held-out accuracy after each round
  std::vector<SubchainId> parents;   // set on merged subchains
  bool retired = false;              // split into branches of merged subchains

  bool contains(MinerId m) const;
  std::uint64_t next_tx_number() const;
  // Numbers the activation and queues it for the current sub-block.
  const ActivationTransaction& record(ActivationTransaction tx);
  // Appends the pending activations as a new sub-block.
  const SubBlock& seal_sub_block();
};

Subchain make_subchain(const CorePool& pool, const ModelParams& initial, const Digest& anchor);

// Splits every subchain into one branch per partnership it belongs to and
// merges the branches of each partnership into a new subchain: member union,
// member-count weighted parameter mean, ledger anchored on the branch heads.
// Subchains outside all partnerships pass through unchanged. Merged ids start
// at next_id.
std::vector<Subchain> split_merge(std::span<const Subchain> subchains,
                                  std::span<const Partnership> partnerships,
                                  std::uint32_t next_id);

}  // namespace poflsc
