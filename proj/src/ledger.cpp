#include "poflsc/ledger.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "poflsc/bytes.hpp"
#include "poflsc/crypto.hpp"
#include "poflsc/error.hpp"

namespace poflsc {
namespace {

void write_tx(ByteWriter& w, const ActivationTransaction& tx) {
  w.u64(tx.tx_number);
  w.u8(static_cast<std::uint8_t>(tx.type));
  w.u32(tx.chain_model.chain.value);
  w.digest(tx.chain_model.model_hash);
  w.u32(tx.verifier.id.value);
  w.u8(static_cast<std::uint8_t>(tx.verifier.role));
  w.u32(tx.miner.id.value);
  w.u8(static_cast<std::uint8_t>(tx.miner.role));
  w.digest(tx.data_id);
  w.u8(tx.prev_dependency ? 1 : 0);
  if (tx.prev_dependency) w.u64(*tx.prev_dependency);
  w.bytes(tx.result);
}

Role read_role(ByteReader& r) {
  const auto v = r.u8();
  if (v > static_cast<std::uint8_t>(Role::kAuditor)) throw Error(ErrorCode::kParse, "bad role");
  return static_cast<Role>(v);
}

ActivationTransaction read_tx(ByteReader& r) {
  ActivationTransaction tx;
  tx.tx_number = r.u64();
  const auto type = r.u8();
  if (type > static_cast<std::uint8_t>(ActivationType::kAudit)) {
    throw Error(ErrorCode::kParse, "bad activation type");
  }
  tx.type = static_cast<ActivationType>(type);
  tx.chain_model.chain = SubchainId{r.u32()};
  tx.chain_model.model_hash = r.digest();
  tx.verifier.id = MinerId{r.u32()};
  tx.verifier.role = read_role(r);
  tx.miner.id = MinerId{r.u32()};
  tx.miner.role = read_role(r);
  tx.data_id = r.digest();
  const auto has_dep = r.u8();
  if (has_dep > 1) throw Error(ErrorCode::kParse, "bad dependency flag");
  if (has_dep == 1) tx.prev_dependency = r.u64();
  tx.result = r.bytes();
  return tx;
}

void write_block(ByteWriter& w, const SubBlock& b) {
  w.u64(b.index);
  w.digest(b.prev_hash);
  w.digest(b.payload_root);
  w.digest(b.hash);
  w.u32(static_cast<std::uint32_t>(b.payload.size()));
  for (const auto& tx : b.payload) w.bytes(canonical_serialize(tx));
  w.bytes(b.transfers);
}

SubBlock read_block(ByteReader& r) {
  SubBlock b;
  b.index = r.u64();
  b.prev_hash = r.digest();
  b.payload_root = r.digest();
  b.hash = r.digest();
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) b.payload.push_back(parse_transaction(r.bytes()));
  b.transfers = r.bytes();
  return b;
}

Digest header_hash(const SubBlock& b) { return sha256(canonical_header(b)); }

// Numbering must continue from `expected`; dependencies must point backwards.
std::optional<std::string> tx_order_fault(std::span<const ActivationTransaction> txs,
                                          std::uint64_t expected) {
  for (const auto& tx : txs) {
    if (tx.tx_number != expected) {
      return "tx_number " + std::to_string(tx.tx_number) + ", expected " + std::to_string(expected);
    }
    if (tx.prev_dependency && *tx.prev_dependency >= tx.tx_number) {
      return "tx " + std::to_string(tx.tx_number) + " depends forward";
    }
    ++expected;
  }
  return std::nullopt;
}

}  // namespace

std::string_view to_string(ActivationType t) {
  switch (t) {
    case ActivationType::kTraining: return "TRAINING";
    case ActivationType::kChallenge: return "CHALLENGE";
    case ActivationType::kAudit: return "AUDIT";
  }
  return "UNKNOWN";
}

std::string_view to_string(ChainFault f) {
  switch (f) {
    case ChainFault::kIndex: return "INDEX";
    case ChainFault::kLink: return "LINK";
    case ChainFault::kTxOrder: return "TX_ORDER";
    case ChainFault::kRoot: return "ROOT";
    case ChainFault::kHash: return "HASH";
  }
  return "UNKNOWN";
}

std::uint64_t Chain::next_tx_number() const {
  for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) {
    if (!it->payload.empty()) return it->payload.back().tx_number + 1;
  }
  return 0;
}

std::size_t Chain::tx_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.payload.size();
  return n;
}

std::vector<std::uint8_t> canonical_serialize(const ActivationTransaction& tx) {
  ByteWriter w;
  write_tx(w, tx);
  return std::move(w).take();
}

std::vector<std::uint8_t> canonical_header(const SubBlock& block) {
  ByteWriter w;
  w.u64(block.index);
  w.digest(block.prev_hash);
  w.digest(block.payload_root);
  return std::move(w).take();
}

std::vector<std::uint8_t> canonical_serialize(const SubBlock& block) {
  ByteWriter w;
  write_block(w, block);
  return std::move(w).take();
}

ActivationTransaction parse_transaction(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  auto tx = read_tx(r);
  if (!r.done()) throw Error(ErrorCode::kParse, "trailing bytes after transaction");
  return tx;
}

SubBlock parse_sub_block(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  auto b = read_block(r);
  if (!r.done()) throw Error(ErrorCode::kParse, "trailing bytes after sub-block");
  return b;
}

Digest merkle_root(const std::vector<std::vector<std::uint8_t>>& leaves) {
  if (leaves.empty()) {
    const std::uint8_t marker = 0x00;
    return sha256(std::span(&marker, 1));
  }
  std::vector<Digest> level;
  level.reserve(leaves.size());
  for (const auto& leaf : leaves) level.push_back(sha256(leaf));
  while (level.size() > 1) {
    std::vector<Digest> next;
    next.reserve((level.size() + 1) / 2);
    for (std::size_t i = 0; i < level.size(); i += 2) {
      const Digest& left = level[i];
      const Digest& right = i + 1 < level.size() ? level[i + 1] : level[i];
      std::array<std::uint8_t, 64> pair{};
      std::copy(left.begin(), left.end(), pair.begin());
      std::copy(right.begin(), right.end(), pair.begin() + 32);
      next.push_back(sha256(pair));
    }
    level = std::move(next);
  }
  return level.front();
}

Digest payload_root(const SubBlock& block) {
  std::vector<std::vector<std::uint8_t>> leaves;
  leaves.reserve(block.payload.size() + 1);
  for (const auto& tx : block.payload) leaves.push_back(canonical_serialize(tx));
  if (!block.transfers.empty()) leaves.push_back(block.transfers);
  return merkle_root(leaves);
}

const SubBlock& append_sub_block(Chain& chain, std::vector<ActivationTransaction> payload,
                                 std::vector<std::uint8_t> transfers) {
  if (auto fault = tx_order_fault(payload, chain.next_tx_number())) {
    throw Error(ErrorCode::kInvalidTx, *fault);
  }
  SubBlock b;
  b.index = chain.blocks.size();
  b.prev_hash = chain.head();
  b.payload = std::move(payload);
  b.transfers = std::move(transfers);
  b.payload_root = payload_root(b);
  b.hash = header_hash(b);
  chain.blocks.push_back(std::move(b));
  return chain.blocks.back();
}

ChainCheck verify_chain(const Chain& chain) {
  std::uint64_t expected_tx = 0;
  for (std::size_t k = 0; k < chain.blocks.size(); ++k) {
    const auto& b = chain.blocks[k];
    auto fail = [k](ChainFault reason, std::string detail) {
      return ChainCheck{false, k, reason, std::move(detail)};
    };
    if (b.index != k) return fail(ChainFault::kIndex, "index " + std::to_string(b.index));
    const Digest& expected_prev = k == 0 ? chain.anchor : chain.blocks[k - 1].hash;
    if (b.prev_hash != expected_prev) return fail(ChainFault::kLink, "prev_hash mismatch");
    if (auto fault = tx_order_fault(b.payload, expected_tx)) {
      return fail(ChainFault::kTxOrder, *fault);
    }
    expected_tx += b.payload.size();
    if (payload_root(b) != b.payload_root) return fail(ChainFault::kRoot, "payload root mismatch");
    if (header_hash(b) != b.hash) return fail(ChainFault::kHash, "header hash mismatch");
  }
  return {};
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

SubchainId select_winner(std::span<const CandidateView> subchains) {
  std::optional<SubchainId> best;
  double best_score = -1.0;
  for (const auto& s : subchains) {
    if (s.phase != Phase::kVerification) continue;
    const double score = median(s.challenge_accuracies);
    if (!best || score > best_score || (score == best_score && s.id < *best)) {
      best = s.id;
      best_score = score;
    }
  }
  if (!best) throw Error(ErrorCode::kNoCandidate, "no subchain reached VERIFICATION");
  return *best;
}

std::vector<std::uint8_t> serialize_chain(const Chain& chain) {
  ByteWriter w;
  for (const auto& b : chain.blocks) write_block(w, b);
  return std::move(w).take();
}

Chain parse_chain(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  Chain chain;
  while (!r.done()) chain.blocks.push_back(read_block(r));
  if (!chain.blocks.empty()) chain.anchor = chain.blocks.front().prev_hash;
  return chain;
}

void write_chain(const Chain& chain, const std::filesystem::path& path) {
  const auto bytes = serialize_chain(chain);
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (f == nullptr) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  const bool ok = std::fwrite(bytes.data(), 1, bytes.size(), f) == bytes.size();
  std::fclose(f);
  if (!ok) throw Error(ErrorCode::kIo, "short write to " + path.string());
}

Chain read_chain(const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (f == nullptr) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> data;
  std::uint8_t buf[65536];
  std::size_t got = 0;
  while ((got = std::fread(buf, 1, sizeof buf, f)) > 0) data.insert(data.end(), buf, buf + got);
  std::fclose(f);
  return parse_chain(data);
}

nlohmann::json chain_to_json(const Chain& chain) {
  using nlohmann::json;
  json blocks = json::array();
  for (const auto& b : chain.blocks) {
    json txs = json::array();
    for (const auto& tx : b.payload) {
      json j{
          {"tx_number", tx.tx_number},
          {"activation_type", to_string(tx.type)},
          {"chain_id", tx.chain_model.chain.value},
          {"model_hash", to_hex(tx.chain_model.model_hash)},
          {"verifier", {{"id", tx.verifier.id.value}, {"role", to_string(tx.verifier.role)}}},
          {"miner", {{"id", tx.miner.id.value}, {"role", to_string(tx.miner.role)}}},
          {"data_id", to_hex(tx.data_id)},
          {"prev_dependency", tx.prev_dependency ? json(*tx.prev_dependency) : json(nullptr)},
          {"result", to_hex(tx.result)},
      };
      txs.push_back(std::move(j));
    }
    blocks.push_back({{"index", b.index},
                      {"prev_hash", to_hex(b.prev_hash)},
                      {"payload_root", to_hex(b.payload_root)},
                      {"hash", to_hex(b.hash)},
                      {"transfers", to_hex(b.transfers)},
                      {"payload", std::move(txs)}});
  }
  return {{"anchor", to_hex(chain.anchor)}, {"sub_blocks", std::move(blocks)}};
}

std::vector<std::uint8_t> encode_training_result(std::uint64_t seed, std::uint64_t base_version,
                                                 std::uint32_t position) {
  ByteWriter w;
  w.u64(seed);
  w.u64(base_version);
  w.u32(position);
  return std::move(w).take();
}

std::vector<std::uint8_t> encode_challenge_result(double accuracy) {
  ByteWriter w;
  w.f64(accuracy);
  return std::move(w).take();
}

std::vector<std::uint8_t> encode_audit_result(bool passed, std::uint64_t failed_round) {
  ByteWriter w;
  w.u8(passed ? 1 : 0);
  w.u64(failed_round);
  return std::move(w).take();
}

std::optional<TrainingResult> decode_training_result(std::span<const std::uint8_t> r) {
  if (r.size() != 20) return std::nullopt;
  ByteReader in(r);
  TrainingResult t{};
  t.seed = in.u64();
  t.base_version = in.u64();
  t.position = in.u32();
  return t;
}

std::optional<double> decode_challenge_result(std::span<const std::uint8_t> r) {
  if (r.size() != 8) return std::nullopt;
  ByteReader in(r);
  const double acc = in.f64();
  if (!(acc >= 0.0 && acc <= 1.0)) return std::nullopt;
  return acc;
}

std::optional<AuditResult> decode_audit_result(std::span<const std::uint8_t> r) {
  if (r.size() != 9) return std::nullopt;
  ByteReader in(r);
  const auto flag = in.u8();
  if (flag > 1) return std::nullopt;
  return AuditResult{flag == 1, in.u64()};
}

}  // namespace poflsc
