#pragma once

#include <memory>
#include <optional>

#include "poflsc/crypto.hpp"
#include "poflsc/error.hpp"
#include "poflsc/fedavg.hpp"
#include "poflsc/ledger.hpp"
#include "poflsc/rng.hpp"
#include "poflsc/subchain.hpp"
#include "poflsc/topology.hpp"
#include "poflsc/verification.hpp"

// Code of the poflsc::Error thrown by fn, or nullopt if it returned.
template <typename F>
std::optional<poflsc::ErrorCode> thrown_code(F&& fn) {
  try {
    fn();
  } catch (const poflsc::Error& e) {
    return e.code();
  }
  return std::nullopt;
}

namespace support {

inline poflsc::ActivationTransaction random_tx(poflsc::Rng& rng, std::uint64_t number) {
  using namespace poflsc;
  ActivationTransaction tx;
  tx.tx_number = number;
  tx.type = static_cast<ActivationType>(rng.below(3));
  tx.chain_model.chain = SubchainId{static_cast<std::uint32_t>(rng.next())};
  for (auto& b : tx.chain_model.model_hash) b = static_cast<std::uint8_t>(rng.next());
  tx.verifier = {MinerId{static_cast<std::uint32_t>(rng.next())}, static_cast<Role>(rng.below(6))};
  tx.miner = {MinerId{static_cast<std::uint32_t>(rng.next())}, static_cast<Role>(rng.below(6))};
  for (auto& b : tx.data_id) b = static_cast<std::uint8_t>(rng.next());
  if (number > 0 && rng.below(2) == 1) tx.prev_dependency = rng.below(number);
  tx.result.resize(rng.below(40));
  for (auto& b : tx.result) b = static_cast<std::uint8_t>(rng.next());
  return tx;
}

// A committed chain of `blocks` sub-blocks with 0..4 random activations each;
// every third sub-block carries some opaque transfer bytes.
inline poflsc::Chain random_chain(std::uint64_t seed, std::size_t blocks) {
  using namespace poflsc;
  Rng rng(seed);
  Chain chain;
  for (auto& b : chain.anchor) b = static_cast<std::uint8_t>(rng.next());
  for (std::size_t k = 0; k < blocks; ++k) {
    std::vector<ActivationTransaction> payload;
    const auto count = rng.below(5);
    std::uint64_t next = chain.next_tx_number();
    for (std::uint64_t i = 0; i < count; ++i) payload.push_back(random_tx(rng, next++));
    std::vector<std::uint8_t> transfers;
    if (k % 3 == 0) transfers.assign(1 + rng.below(16), static_cast<std::uint8_t>(k));
    append_sub_block(chain, std::move(payload), std::move(transfers));
  }
  return chain;
}

}  // namespace support

namespace support {

// Eight miners on a synthetic 4-class problem sharing one subchain.
struct TrainingFixture {
  poflsc::Dataset ds;
  std::vector<poflsc::Shard> shards;
  std::unique_ptr<poflsc::Topology> topo;
  poflsc::Subchain sc;
  std::uint64_t master_seed = 77;

  TrainingFixture() {
    using namespace poflsc;
    ds = synth_dataset(4, 60, 6, 2.5, 3);
    shards = shard_dataset(ds, 8, 20, 4);
    topo = std::make_unique<Topology>(gen_response_matrix(8, 10, 3, 5), gen_profiles(8, 5, 1, 6), 1);
    CorePool pool{SubchainId{2}, {}, MinerId{1}};
    for (std::uint32_t m = 0; m < 8; ++m) pool.members.push_back(MinerId{m});
    sc = make_subchain(pool, init_params({6, 0, 4}, 0), sha256(std::string_view("anchor")));
  }

  poflsc::RoundContext context(double start = 0.0) const {
    return poflsc::RoundContext{ds, shards, *topo, 1, 0.1, master_seed, start};
  }
  poflsc::ReplayContext replay() const { return poflsc::ReplayContext{ds, shards, 1, 0.1}; }

  // `sync` CORE rounds then `async` SECONDARY rounds, one sub-block each.
  void train(int sync, int async, const poflsc::UpdateTamper& tamper = {}, int tamper_round = -1) {
    using namespace poflsc;
    for (int r = 0; r < sync + async; ++r) {
      if (r == sync) sc.phase = Phase::kSecondary;
      const auto& hook = r == tamper_round ? tamper : UpdateTamper{};
      run_global_round(sc, context(1000.0 * r), sc.members, hook);
      sc.seal_sub_block();
    }
  }
};

}  // namespace support
