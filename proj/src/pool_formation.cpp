#include "poflsc/pool_formation.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace poflsc {
namespace {

void emit(FormationTrace* trace, FormationEventKind kind, MinerId actor, MinerId subject,
          Millis rt = 0.0) {
  if (trace != nullptr) trace->push_back({kind, actor, subject, rt});
}

bool by_rt_then_id(const CandidateEntry& a, const CandidateEntry& b) {
  return a.rt != b.rt ? a.rt < b.rt : a.id < b.id;
}

const CandidateList* find_list(const CandidateLists& lists, MinerId m) {
  auto it = lists.find(m);
  return it == lists.end() ? nullptr : &it->second;
}

bool listed_by(const CandidateLists& lists, MinerId owner, MinerId candidate) {
  const auto* l = find_list(lists, owner);
  return l != nullptr && l->contains(candidate);
}

}  // namespace

std::string_view to_string(FormationEventKind kind) {
  switch (kind) {
    case FormationEventKind::kAdd: return "add";
    case FormationEventKind::kEvict: return "evict";
    case FormationEventKind::kSeed: return "seed";
    case FormationEventKind::kPropose: return "propose";
    case FormationEventKind::kConfirm: return "confirm";
    case FormationEventKind::kReject: return "reject";
    case FormationEventKind::kEstablish: return "establish";
    case FormationEventKind::kDemolish: return "demolish";
  }
  return "unknown";
}

Millis CandidateList::total() const {
  Millis sum = 0.0;
  for (const auto& e : entries) sum += e.rt;
  return sum;
}

bool CandidateList::contains(MinerId id) const {
  return std::any_of(entries.begin(), entries.end(),
                     [id](const CandidateEntry& e) { return e.id == id; });
}

CandidateList build_candidate_list(MinerId owner, const std::map<MinerId, Millis>& rts,
                                   Millis t_sub, std::span<const MinerId> arrival_order,
                                   FormationTrace* trace) {
  CandidateList list{owner, {}};
  auto& entries = list.entries;  // insertion order until the final sort
  for (MinerId peer : arrival_order) {
    auto it = rts.find(peer);
    if (peer == owner || it == rts.end() || list.contains(peer)) continue;
    const Millis rt = it->second;

    const Millis sum = list.total();
    const bool fits = sum + rt < t_sub;
    bool shorter_than_longest = false;
    if (!entries.empty()) {
      const auto longest = std::max_element(
          entries.begin(), entries.end(),
          [](const CandidateEntry& a, const CandidateEntry& b) { return a.rt < b.rt; });
      shorter_than_longest = rt < longest->rt;
    }
    if (!fits && !shorter_than_longest) continue;

    entries.push_back({peer, rt});
    emit(trace, FormationEventKind::kAdd, owner, peer, rt);

    while (!entries.empty() && list.total() > t_sub) {
      // Longest rt leaves first; among equals the higher id.
      auto victim = std::max_element(entries.begin(), entries.end(), by_rt_then_id);
      emit(trace, FormationEventKind::kEvict, owner, victim->id, victim->rt);
      entries.erase(victim);
    }
  }
  std::sort(entries.begin(), entries.end(), by_rt_then_id);
  return list;
}

CandidateList build_candidate_list(MinerId owner, const std::map<MinerId, Millis>& rts,
                                   Millis t_sub, FormationTrace* trace) {
  std::vector<MinerId> order;
  order.reserve(rts.size());
  for (const auto& [id, rt] : rts) order.push_back(id);
  return build_candidate_list(owner, rts, t_sub, order, trace);
}

CandidateLists build_all_candidate_lists(const Topology& topo, Millis t_sub,
                                         FormationTrace* trace) {
  CandidateLists lists;
  for (std::uint32_t i = 0; i < topo.size(); ++i) {
    const MinerId owner{i};
    std::map<MinerId, Millis> rts;
    for (MinerId peer : topo.visible_miners(owner)) rts[peer] = topo.response_time(owner, peer);
    lists.emplace(owner, build_candidate_list(owner, rts, t_sub, trace));
  }
  return lists;
}

bool CorePool::contains(MinerId m) const {
  return std::binary_search(members.begin(), members.end(), m);
}

std::optional<MinerId> first_common_partner(const CandidateList& a, const CandidateList& b) {
  const CandidateList& lo = a.owner < b.owner ? a : b;
  const CandidateList& hi = a.owner < b.owner ? b : a;
  auto usable = [&](MinerId m) { return m != lo.owner && m != hi.owner; };
  const std::size_t depth = std::max(lo.entries.size(), hi.entries.size());
  for (std::size_t r = 0; r < depth; ++r) {
    if (r < lo.entries.size()) {
      const MinerId m = lo.entries[r].id;
      if (usable(m) && hi.contains(m)) return m;
    }
    if (r < hi.entries.size()) {
      const MinerId m = hi.entries[r].id;
      if (usable(m) && lo.contains(m)) return m;
    }
  }
  return std::nullopt;
}

std::optional<CorePool> grow_core_pool(const CandidateLists& lists, MinerId a, MinerId b,
                                       std::size_t threshold, std::size_t cap,
                                       FormationTrace* trace) {
  if (a > b) std::swap(a, b);
  const auto* la = find_list(lists, a);
  const auto* lb = find_list(lists, b);
  if (la == nullptr || lb == nullptr || !la->contains(b) || !lb->contains(a)) return std::nullopt;

  const auto common = first_common_partner(*la, *lb);
  if (!common || cap < 3) {
    emit(trace, FormationEventKind::kDemolish, a, b);
    return std::nullopt;
  }
  std::set<MinerId> members{a, b, *common};
  emit(trace, FormationEventKind::kSeed, a, b);
  emit(trace, FormationEventKind::kSeed, a, *common);

  bool stopped = false;
  while (!stopped && members.size() < cap) {
    // Every member proposes its closest unconfirmed candidate.
    std::vector<std::pair<MinerId, MinerId>> proposals;  // (proposer, candidate)
    std::set<MinerId> proposed;
    for (MinerId m : members) {
      const auto* l = find_list(lists, m);
      if (l == nullptr) continue;
      for (const auto& e : l->entries) {
        if (members.contains(e.id)) continue;
        if (proposed.insert(e.id).second) {
          proposals.emplace_back(m, e.id);
          emit(trace, FormationEventKind::kPropose, m, e.id, e.rt);
        }
        break;
      }
    }
    if (proposals.empty()) break;

    for (const auto& [proposer, candidate] : proposals) {
      const auto rejecter = std::find_if(members.begin(), members.end(), [&](MinerId m) {
        return !listed_by(lists, m, candidate);
      });
      if (rejecter != members.end()) {
        emit(trace, FormationEventKind::kReject, *rejecter, candidate);
        stopped = true;
        break;
      }
      members.insert(candidate);
      emit(trace, FormationEventKind::kConfirm, proposer, candidate);
      if (members.size() >= cap) break;
    }
  }

  if (members.size() <= threshold) {
    emit(trace, FormationEventKind::kDemolish, a, b);
    return std::nullopt;
  }
  CorePool pool;
  pool.members.assign(members.begin(), members.end());
  pool.host = pool.members.front();
  emit(trace, FormationEventKind::kEstablish, a, b, static_cast<Millis>(members.size()));
  return pool;
}

namespace {

template <typename Visit>
void for_each_mutual_pair(const CandidateLists& lists, Visit&& visit) {
  for (const auto& [i, li] : lists) {
    std::vector<MinerId> partners;
    for (const auto& e : li.entries) {
      if (i < e.id && listed_by(lists, e.id, i)) partners.push_back(e.id);
    }
    std::sort(partners.begin(), partners.end());
    for (MinerId j : partners) {
      if (!visit(i, j)) return;
    }
  }
}

}  // namespace

std::optional<CorePool> establish_core_pool(const CandidateLists& lists, std::size_t threshold,
                                            std::size_t cap, FormationTrace* trace) {
  std::optional<CorePool> found;
  for_each_mutual_pair(lists, [&](MinerId i, MinerId j) {
    found = grow_core_pool(lists, i, j, threshold, cap, trace);
    return !found.has_value();
  });
  return found;
}

std::vector<CorePool> establish_core_pools(const CandidateLists& lists, std::size_t threshold,
                                           std::size_t cap, std::uint32_t first_id,
                                           FormationTrace* trace) {
  std::vector<CorePool> pools;
  for_each_mutual_pair(lists, [&](MinerId i, MinerId j) {
    const bool pooled = std::any_of(pools.begin(), pools.end(), [&](const CorePool& p) {
      return p.contains(i) || p.contains(j);
    });
    if (pooled) return true;
    auto pool = grow_core_pool(lists, i, j, threshold, cap, trace);
    if (!pool) return true;
    const bool duplicate = std::any_of(pools.begin(), pools.end(), [&](const CorePool& p) {
      return p.members == pool->members;
    });
    if (!duplicate) {
      pool->id = SubchainId{first_id + static_cast<std::uint32_t>(pools.size())};
      pools.push_back(std::move(*pool));
    }
    return true;
  });
  return pools;
}

MinerId select_host(const CorePool& pool, std::span<const MinerProfile> profiles,
                    const ResponseTimeMatrix& rts) {
  auto reliability = [&](MinerId m) {
    for (const auto& p : profiles) {
      if (p.id == m) return p.reliability;
    }
    return 1.0;
  };
  double mean = 0.0;
  for (MinerId m : pool.members) mean += reliability(m);
  mean /= static_cast<double>(pool.members.size());

  std::vector<MinerId> qualified;
  for (MinerId m : pool.members) {
    if (reliability(m) > mean) qualified.push_back(m);
  }
  if (qualified.empty()) qualified = pool.members;

  MinerId best = qualified.front();
  double best_rt = std::numeric_limits<double>::infinity();
  for (MinerId m : qualified) {
    double sum = 0.0;
    for (MinerId o : pool.members) {
      if (o != m) sum += rts.at(m, o);
    }
    const double mean_rt = pool.members.size() > 1
                               ? sum / static_cast<double>(pool.members.size() - 1)
                               : 0.0;
    if (mean_rt < best_rt) {  // ascending scan keeps the lowest id on ties
      best_rt = mean_rt;
      best = m;
    }
  }
  return best;
}

std::vector<Partnership> form_partnerships(std::span<const PoolHead> heads,
                                           const ManagerResponse& response, Millis t_sub,
                                           std::size_t threshold, std::size_t cap,
                                           FormationTrace* trace) {
  if (heads.size() < 2) return {};
  // Pools are the population here; node k stands for heads[k].
  CandidateLists lists;
  for (std::uint32_t a = 0; a < heads.size(); ++a) {
    std::map<MinerId, Millis> rts;
    for (std::uint32_t b = 0; b < heads.size(); ++b) {
      if (a != b) rts[MinerId{b}] = response(heads[a].manager, heads[b].manager);
    }
    lists.emplace(MinerId{a}, build_candidate_list(MinerId{a}, rts, t_sub));
  }
  const auto groups = establish_core_pools(lists, threshold, cap, 0, trace);

  std::vector<Partnership> out;
  out.reserve(groups.size());
  for (const auto& g : groups) {
    std::vector<std::pair<SubchainId, MinerId>> rows;
    for (MinerId node : g.members) rows.emplace_back(heads[node.value].pool, heads[node.value].manager);
    std::sort(rows.begin(), rows.end());
    Partnership p;
    for (const auto& [pool, mgr] : rows) {
      p.pools.push_back(pool);
      p.managers.push_back(mgr);
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<Partnership> form_partnerships(std::span<const PoolHead> heads,
                                           const ResponseTimeMatrix& rts, Millis t_sub,
                                           std::size_t threshold, std::size_t cap) {
  return form_partnerships(
      heads, [&rts](MinerId a, MinerId b) { return rts.at(a, b); }, t_sub, threshold, cap);
}

}  // namespace poflsc
