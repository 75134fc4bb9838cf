#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "poflsc/types.hpp"

namespace poflsc {

enum class ActivationType : std::uint8_t { kTraining = 0, kChallenge = 1, kAudit = 2 };

std::string_view to_string(ActivationType t);

struct Party {
  MinerId id;
  Role role = Role::kTrainer;

  bool operator==(const Party&) const = default;
};

struct ChainModel {
  SubchainId chain;
  Digest model_hash{};  // post-round model

  bool operator==(const ChainModel&) const = default;
};

// One training, challenge or audit event.
struct ActivationTransaction {
  std::uint64_t tx_number = 0;
  ActivationType type = ActivationType::kTraining;
  ChainModel chain_model;
  Party verifier;
  Party miner;
  Digest data_id{};
  std::optional<std::uint64_t> prev_dependency;
  // Type-specific outcome; see the encode_* helpers below.
  std::vector<std::uint8_t> result;

  bool operator==(const ActivationTransaction&) const = default;
};

struct SubBlock {
  std::uint64_t index = 0;
  Digest prev_hash{};
  std::vector<ActivationTransaction> payload;
  // Transfer ledger carried verbatim; only committed to via payload_root.
  std::vector<std::uint8_t> transfers;
  Digest payload_root{};
  Digest hash{};

  bool operator==(const SubBlock&) const = default;
};

// A subchain's sub-block sequence. anchor is the previous main-block head
// (or, for merged subchains, the digest of the merged branch heads).
struct Chain {
  Digest anchor{};
  std::vector<SubBlock> blocks;

  Digest head() const { return blocks.empty() ? anchor : blocks.back().hash; }
  std::uint64_t next_tx_number() const;
  std::size_t tx_count() const;

  bool operator==(const Chain&) const = default;
};

std::vector<std::uint8_t> canonical_serialize(const ActivationTransaction& tx);
std::vector<std::uint8_t> canonical_header(const SubBlock& block);
std::vector<std::uint8_t> canonical_serialize(const SubBlock& block);

// Strict inverses: trailing bytes, bad enums and bad flags are PARSE_ERROR.
ActivationTransaction parse_transaction(std::span<const std::uint8_t> bytes);
SubBlock parse_sub_block(std::span<const std::uint8_t> bytes);

// Binary Merkle root; the last node is paired with itself on odd levels.
// No leaves hashes to H(0x00).
Digest merkle_root(const std::vector<std::vector<std::uint8_t>>& leaves);
Digest payload_root(const SubBlock& block);

// Validates the payload against the chain and links the new sub-block.
const SubBlock& append_sub_block(Chain& chain, std::vector<ActivationTransaction> payload,
                                 std::vector<std::uint8_t> transfers = {});

enum class ChainFault { kIndex, kLink, kTxOrder, kRoot, kHash };

std::string_view to_string(ChainFault f);

struct ChainCheck {
  bool ok = true;
  std::size_t index = 0;
  ChainFault reason = ChainFault::kIndex;
  std::string detail;
};

// Checks, per sub-block in order: index, link, tx numbering, payload root,
// header hash. Reports the first violation.
ChainCheck verify_chain(const Chain& chain);

struct CandidateView {
  SubchainId id;
  Phase phase = Phase::kInitial;
  std::vector<double> challenge_accuracies;
};

double median(std::vector<double> values);

// Highest median challenge accuracy among VERIFICATION-phase subchains; ties
// go to the lower id. Throws NO_CANDIDATE.
SubchainId select_winner(std::span<const CandidateView> subchains);

// Concatenated canonical sub-blocks. The anchor is recovered from the first
// sub-block's prev_hash.
std::vector<std::uint8_t> serialize_chain(const Chain& chain);
Chain parse_chain(std::span<const std::uint8_t> bytes);
void write_chain(const Chain& chain, const std::filesystem::path& path);
Chain read_chain(const std::filesystem::path& path);

nlohmann::json chain_to_json(const Chain& chain);

// Result payloads.
std::vector<std::uint8_t> encode_training_result(std::uint64_t seed, std::uint64_t base_version,
                                                 std::uint32_t position);
std::vector<std::uint8_t> encode_challenge_result(double accuracy);
std::vector<std::uint8_t> encode_audit_result(bool passed, std::uint64_t failed_round);

struct TrainingResult {
  std::uint64_t seed;
  std::uint64_t base_version;
  std::uint32_t position;
};
std::optional<TrainingResult> decode_training_result(std::span<const std::uint8_t> r);
std::optional<double> decode_challenge_result(std::span<const std::uint8_t> r);
struct AuditResult {
  bool passed;
  std::uint64_t failed_round;
};
std::optional<AuditResult> decode_audit_result(std::span<const std::uint8_t> r);

}  // namespace poflsc
