#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "poflsc/ledger.hpp"
#include "poflsc/learner.hpp"
#include "poflsc/round_record.hpp"
#include "poflsc/subchain.hpp"

namespace poflsc {

// ---------------------------------------------------------------------------
// Type One: record keeping.

enum class FindingKind { kChainFault, kMissingResult };

std::string_view to_string(FindingKind k);

struct Finding {
  FindingKind kind;
  std::size_t sub_block = 0;
  std::uint64_t tx_number = 0;
  std::string detail;
};

struct TxTally {
  std::size_t confirmed = 0;
  std::size_t total = 0;

  double reliability() const {
    return total == 0 ? 1.0 : static_cast<double>(confirmed) / static_cast<double>(total);
  }
};

struct TypeOneReport {
  ChainCheck chain;
  std::vector<Finding> findings;
  // Per node: activations it took part in, and how many sit in sub-blocks
  // before the first chain fault.
  std::map<MinerId, TxTally> tallies;

  bool clean() const { return findings.empty(); }
};

// verify_chain plus a result check on every CHALLENGE and AUDIT activation.
TypeOneReport type_one_check(const Chain& chain);

// ---------------------------------------------------------------------------
// Type Two: periodic challenges from data contributors.

struct ChallengeSet {
  MinerId issuer;
  std::uint64_t period = 0;
  std::vector<std::vector<std::size_t>> subsets;  // indices into the dataset
  std::map<SubchainId, std::size_t> assignment;   // subchain -> subset index
};

// Remembers which (issuer, period) pairs have issued.
class ChallengeRegistry {
 public:
  bool issued(MinerId issuer, std::uint64_t period) const;
  void mark(MinerId issuer, std::uint64_t period);

 private:
  std::set<std::pair<MinerId, std::uint64_t>> issued_;
};

// k seeded subsets of the issuer's shard, each drawn without replacement,
// assigned round-robin to the visible subchains in ascending id order.
ChallengeSet generate_challenge(ChallengeRegistry& registry, const Shard& issuer_shard,
                                std::uint64_t period, std::size_t k_subsets,
                                std::size_t subset_size,
                                std::span<const SubchainId> visible_subchains,
                                std::uint64_t seed);

struct SubchainVerification {
  std::size_t challenges_received = 0;
  std::size_t audits_passed = 0;
  std::size_t audits_failed = 0;
  std::vector<double> challenge_accuracies;
};

struct ReliabilityTally {
  std::size_t passed = 0;
  std::size_t failed = 0;
};

struct VerificationState {
  std::map<SubchainId, SubchainVerification> subchains;
  std::map<MinerId, ReliabilityTally> miners;

  // Smoothed pass rate with a prior of one passed event.
  double reliability(MinerId m) const;
};

// Evaluates the subchain's current model on the assigned subset and records a
// CHALLENGE activation carrying the accuracy.
const ActivationTransaction& respond_challenge(Subchain& subchain, const ChallengeSet& challenge,
                                               const Dataset& ds, VerificationState& state);

// ---------------------------------------------------------------------------
// Type Three: audit by replay.

struct ReplayContext {
  const Dataset& ds;
  std::span<const Shard> shards;  // indexed by MinerId
  int local_epochs = 1;
  double learning_rate = 0.1;
};

struct AuditOutcome {
  bool passed = true;
  std::uint64_t failed_round = 0;
};

// Re-executes every round from the subchain's initial model. Passes iff each
// round's pre-state, update digest and post-state hash all reproduce.
AuditOutcome replay_rounds(const ModelParams& initial, std::span<const RoundRecord> records,
                           const ReplayContext& ctx);

// replay_rounds plus bookkeeping: an AUDIT activation, the subchain's audit
// counters and every participant's reliability tally.
AuditOutcome audit_replay(Subchain& subchain, std::span<const RoundRecord> records,
                          const ReplayContext& ctx, MinerId auditor, VerificationState& state);

bool candidacy_check(const SubchainVerification& state, std::size_t audits_min,
                     std::size_t challenges_min);

}  // namespace poflsc
