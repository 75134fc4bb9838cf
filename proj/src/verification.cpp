#include "poflsc/verification.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "poflsc/bytes.hpp"
#include "poflsc/crypto.hpp"
#include "poflsc/error.hpp"
#include "poflsc/fedavg.hpp"
#include "poflsc/rng.hpp"

namespace poflsc {

std::string_view to_string(FindingKind k) {
  return k == FindingKind::kChainFault ? "CHAIN_FAULT" : "MISSING_RESULT";
}

TypeOneReport type_one_check(const Chain& chain) {
  TypeOneReport report;
  report.chain = verify_chain(chain);
  const std::size_t trusted = report.chain.ok ? chain.blocks.size() : report.chain.index;
  if (!report.chain.ok) {
    report.findings.push_back({FindingKind::kChainFault, report.chain.index, 0,
                               std::string(to_string(report.chain.reason)) + ": " +
                                   report.chain.detail});
  }

  for (std::size_t k = 0; k < chain.blocks.size(); ++k) {
    for (const auto& tx : chain.blocks[k].payload) {
      for (MinerId node : {tx.miner.id, tx.verifier.id}) {
        auto& t = report.tallies[node];
        ++t.total;
        if (k < trusted) ++t.confirmed;
        if (tx.miner.id == tx.verifier.id) break;
      }
      const bool has_result =
          (tx.type == ActivationType::kChallenge && decode_challenge_result(tx.result)) ||
          (tx.type == ActivationType::kAudit && decode_audit_result(tx.result)) ||
          tx.type == ActivationType::kTraining;
      if (!has_result) {
        report.findings.push_back({FindingKind::kMissingResult, k, tx.tx_number,
                                   std::string(to_string(tx.type)) + " without a valid result"});
      }
    }
  }
  return report;
}

bool ChallengeRegistry::issued(MinerId issuer, std::uint64_t period) const {
  return issued_.contains({issuer, period});
}

void ChallengeRegistry::mark(MinerId issuer, std::uint64_t period) {
  issued_.insert({issuer, period});
}

ChallengeSet generate_challenge(ChallengeRegistry& registry, const Shard& issuer_shard,
                                std::uint64_t period, std::size_t k_subsets,
                                std::size_t subset_size,
                                std::span<const SubchainId> visible_subchains,
                                std::uint64_t seed) {
  const MinerId issuer = issuer_shard.owner;
  if (registry.issued(issuer, period)) {
    throw Error(ErrorCode::kAlreadyIssued, "miner " + std::to_string(issuer.value) +
                                               " already challenged in period " +
                                               std::to_string(period));
  }
  if (subset_size > issuer_shard.indices.size() || subset_size == 0 || k_subsets == 0) {
    throw Error(ErrorCode::kSubsetTooLarge,
                "subset of " + std::to_string(subset_size) + " from a shard of " +
                    std::to_string(issuer_shard.indices.size()));
  }
  ChallengeSet set{issuer, period, {}, {}};
  for (std::size_t s = 0; s < k_subsets; ++s) {
    Rng rng(derive_seed(seed, "challenge", issuer.value, period, s));
    std::vector<std::size_t> pool = issuer_shard.indices;
    for (std::size_t i = 0; i < subset_size; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(subset_size);
    set.subsets.push_back(std::move(pool));
  }
  std::vector<SubchainId> targets(visible_subchains.begin(), visible_subchains.end());
  std::sort(targets.begin(), targets.end());
  targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
  for (std::size_t i = 0; i < targets.size(); ++i) set.assignment[targets[i]] = i % k_subsets;
  registry.mark(issuer, period);
  return set;
}

double VerificationState::reliability(MinerId m) const {
  auto it = miners.find(m);
  if (it == miners.end()) return 1.0;
  const auto& t = it->second;
  return (static_cast<double>(t.passed) + 1.0) /
         (static_cast<double>(t.passed + t.failed) + 1.0);
}

const ActivationTransaction& respond_challenge(Subchain& subchain, const ChallengeSet& challenge,
                                               const Dataset& ds, VerificationState& state) {
  if (subchain.model.values.empty()) {
    throw Error(ErrorCode::kNoModel, "subchain " + std::to_string(subchain.id.value));
  }
  auto it = challenge.assignment.find(subchain.id);
  if (it == challenge.assignment.end()) {
    throw Error(ErrorCode::kBadParams, "subchain " + std::to_string(subchain.id.value) +
                                           " is not assigned in this challenge set");
  }
  const auto& subset = challenge.subsets.at(it->second);
  const double accuracy = evaluate(subchain.model, ds, subset);

  ByteWriter w;
  w.u32(challenge.issuer.value);
  w.u64(challenge.period);
  w.u32(static_cast<std::uint32_t>(subset.size()));
  for (auto i : subset) w.u64(i);

  ActivationTransaction tx;
  tx.type = ActivationType::kChallenge;
  tx.chain_model = {subchain.id, params_hash(subchain.model)};
  tx.verifier = {challenge.issuer, Role::kChallenger};
  tx.miner = {subchain.host, Role::kHost};
  tx.data_id = sha256(w.data());
  tx.prev_dependency = subchain.last_training_tx;
  tx.result = encode_challenge_result(accuracy);

  auto& vs = state.subchains[subchain.id];
  ++vs.challenges_received;
  vs.challenge_accuracies.push_back(accuracy);
  return subchain.record(std::move(tx));
}

AuditOutcome replay_rounds(const ModelParams& initial, std::span<const RoundRecord> records,
                           const ReplayContext& ctx) {
  ModelParams model = initial;
  for (const auto& rec : records) {
    for (MinerId m : rec.contributors) {
      if (!rec.seeds_used.contains(m)) {
        throw Error(ErrorCode::kMissingSeeds, "round " + std::to_string(rec.round) +
                                                  " has no seed for miner " +
                                                  std::to_string(m.value));
      }
    }
  }
  for (const auto& rec : records) {
    if (params_hash(model) != rec.pre_hash) return {false, rec.round};
    std::vector<GradientUpdate> ordered;
    ordered.reserve(rec.contributors.size());
    for (MinerId m : rec.contributors) {
      if (m.value >= ctx.shards.size()) return {false, rec.round};
      const auto seed = rec.seeds_used.at(m);
      auto u = train_local(model, ctx.ds, ctx.shards[m.value], ctx.local_epochs,
                           ctx.learning_rate, seed);
      u.miner = m;
      u.round = rec.base_version;
      ordered.push_back(std::move(u));
    }
    if (ordered.empty() || updates_hash(ordered) != rec.updates_hash) return {false, rec.round};
    model = apply_round(model, rec.mode, rec.base_version, ordered);
    if (params_hash(model) != rec.post_hash) return {false, rec.round};
  }
  return {};
}

AuditOutcome audit_replay(Subchain& subchain, std::span<const RoundRecord> records,
                          const ReplayContext& ctx, MinerId auditor, VerificationState& state) {
  const auto outcome = replay_rounds(subchain.initial_model, records, ctx);

  std::set<MinerId> participants;
  std::set<MinerId> blamed;
  ByteWriter w;
  for (const auto& rec : records) {
    participants.insert(rec.contributors.begin(), rec.contributors.end());
    if (!outcome.passed && rec.round == outcome.failed_round) {
      blamed.insert(rec.contributors.begin(), rec.contributors.end());
    }
    w.bytes(canonical_serialize(rec));
  }
  for (MinerId m : participants) {
    auto& t = state.miners[m];
    if (blamed.contains(m)) {
      ++t.failed;
    } else {
      ++t.passed;
    }
  }
  auto& vs = state.subchains[subchain.id];
  if (outcome.passed) {
    ++vs.audits_passed;
  } else {
    ++vs.audits_failed;
  }

  ActivationTransaction tx;
  tx.type = ActivationType::kAudit;
  tx.chain_model = {subchain.id, params_hash(subchain.model)};
  tx.verifier = {auditor, Role::kAuditor};
  tx.miner = {subchain.host, Role::kHost};
  tx.data_id = sha256(w.data());
  tx.prev_dependency = subchain.last_training_tx;
  tx.result = encode_audit_result(outcome.passed, outcome.failed_round);
  subchain.record(std::move(tx));
  return outcome;
}

bool candidacy_check(const SubchainVerification& state, std::size_t audits_min,
                     std::size_t challenges_min) {
  return state.audits_passed >= audits_min && state.challenges_received >= challenges_min;
}

}  // namespace poflsc
