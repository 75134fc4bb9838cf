#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "poflsc/topology.hpp"
#include "poflsc/types.hpp"

namespace poflsc {

struct CandidateEntry {
  MinerId id;
  Millis rt = 0.0;

  bool operator==(const CandidateEntry&) const = default;
};

// A miner's partner candidates, ascending by (rt, id). The summed rt stays
// within the sub-block time unless the list holds a single entry.
struct CandidateList {
  MinerId owner;
  std::vector<CandidateEntry> entries;

  Millis total() const;
  bool contains(MinerId id) const;
  bool operator==(const CandidateList&) const = default;
};

using CandidateLists = std::map<MinerId, CandidateList>;

enum class FormationEventKind {
  kAdd,
  kEvict,
  kSeed,
  kPropose,
  kConfirm,
  kReject,
  kEstablish,
  kDemolish,
};

std::string_view to_string(FormationEventKind kind);

struct FormationEvent {
  FormationEventKind kind;
  MinerId actor;    // list owner or proposing member
  MinerId subject;  // candidate concerned
  Millis rt = 0.0;
};

using FormationTrace = std::vector<FormationEvent>;

CandidateList build_candidate_list(MinerId owner, const std::map<MinerId, Millis>& rts,
                                   Millis t_sub, std::span<const MinerId> arrival_order,
                                   FormationTrace* trace = nullptr);

// Arrival order is ascending MinerId.
CandidateList build_candidate_list(MinerId owner, const std::map<MinerId, Millis>& rts,
                                   Millis t_sub, FormationTrace* trace = nullptr);

// Lists for every miner of a topology over its visible peers.
CandidateLists build_all_candidate_lists(const Topology& topo, Millis t_sub,
                                         FormationTrace* trace = nullptr);

struct CorePool {
  SubchainId id;
  std::vector<MinerId> members;  // ascending
  MinerId host;

  bool contains(MinerId m) const;
  bool operator==(const CorePool&) const = default;
};

// Scans both lists from the lowest response time, alternating sides with the
// lower id first, and returns the first miner present in both.
std::optional<MinerId> first_common_partner(const CandidateList& a, const CandidateList& b);

// Grows a pool from the mutually listed pair (a, b). nullopt means the pool
// was demolished: the confirmed member count did not exceed the threshold.
std::optional<CorePool> grow_core_pool(const CandidateLists& lists, MinerId a, MinerId b,
                                       std::size_t threshold,
                                       std::size_t cap = std::numeric_limits<std::size_t>::max(),
                                       FormationTrace* trace = nullptr);

// First pool established over mutually listed pairs in ascending order.
std::optional<CorePool> establish_core_pool(
    const CandidateLists& lists, std::size_t threshold,
    std::size_t cap = std::numeric_limits<std::size_t>::max(), FormationTrace* trace = nullptr);

// Every distinct pool. Only pairs of miners outside all established pools
// seed a new one; growth may still recruit pooled miners. Ids are assigned from first_id upward in discovery order.
std::vector<CorePool> establish_core_pools(
    const CandidateLists& lists, std::size_t threshold,
    std::size_t cap = std::numeric_limits<std::size_t>::max(), std::uint32_t first_id = 0,
    FormationTrace* trace = nullptr);

// Among members whose reliability exceeds the pool mean (all members if none
// does), the one with the least mean response time to the others.
MinerId select_host(const CorePool& pool, std::span<const MinerProfile> profiles,
                    const ResponseTimeMatrix& rts);

struct PoolHead {
  SubchainId pool;
  MinerId manager;
};

struct Partnership {
  std::vector<SubchainId> pools;  // ascending
  std::vector<MinerId> managers;  // aligned with pools

  bool operator==(const Partnership&) const = default;
};

// Response time between two managers, used to rank partner pools.
using ManagerResponse = std::function<Millis(MinerId from, MinerId to)>;

// Phase-one selection rerun with pool managers as the population.
std::vector<Partnership> form_partnerships(
    std::span<const PoolHead> heads, const ManagerResponse& response, Millis t_sub,
    std::size_t threshold, std::size_t cap = std::numeric_limits<std::size_t>::max(),
    FormationTrace* trace = nullptr);

std::vector<Partnership> form_partnerships(
    std::span<const PoolHead> heads, const ResponseTimeMatrix& rts, Millis t_sub,
    std::size_t threshold, std::size_t cap = std::numeric_limits<std::size_t>::max());

}  // namespace poflsc
