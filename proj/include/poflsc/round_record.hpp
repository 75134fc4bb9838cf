#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "poflsc/types.hpp"

namespace poflsc {

enum class RoundMode : std::uint8_t { kSync = 0, kAsync = 1 };

// Everything an auditor needs to re-execute one global round.
struct RoundRecord {
  SubchainId subchain;
  std::uint64_t round = 0;         // sub-block index of the subchain
  RoundMode mode = RoundMode::kSync;
  std::uint64_t base_version = 0;  // model version all updates trained from
  std::vector<MinerId> contributors;  // application order
  std::map<MinerId, std::uint64_t> seeds_used;
  Digest pre_hash{};
  Digest post_hash{};
  Digest updates_hash{};  // commits to every delta in application order

  bool operator==(const RoundRecord&) const = default;
};

std::vector<std::uint8_t> canonical_serialize(const RoundRecord& r);

}  // namespace poflsc
