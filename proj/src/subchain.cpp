#include "poflsc/subchain.hpp"

#include <algorithm>
#include <set>

#include "poflsc/crypto.hpp"
#include "poflsc/error.hpp"

namespace poflsc {

bool Subchain::contains(MinerId m) const {
  return std::binary_search(members.begin(), members.end(), m);
}

std::uint64_t Subchain::next_tx_number() const {
  return pending.empty() ? ledger.next_tx_number() : pending.back().tx_number + 1;
}

const ActivationTransaction& Subchain::record(ActivationTransaction tx) {
  tx.tx_number = next_tx_number();
  pending.push_back(std::move(tx));
  return pending.back();
}

const SubBlock& Subchain::seal_sub_block() {
  auto payload = std::move(pending);
  pending.clear();
  return append_sub_block(ledger, std::move(payload));
}

Subchain make_subchain(const CorePool& pool, const ModelParams& initial, const Digest& anchor) {
  Subchain s;
  s.id = pool.id;
  s.members = pool.members;
  s.host = pool.host;
  s.phase = Phase::kCore;
  s.initial_model = initial;
  s.model = initial;
  s.ledger.anchor = anchor;
  return s;
}

std::vector<Subchain> split_merge(std::span<const Subchain> subchains,
                                  std::span<const Partnership> partnerships,
                                  std::uint32_t next_id) {
  auto find = [&](SubchainId id) -> const Subchain* {
    for (const auto& s : subchains) {
      if (s.id == id) return &s;
    }
    return nullptr;
  };

  std::set<SubchainId> partnered;
  for (const auto& p : partnerships) {
    for (SubchainId id : p.pools) {
      if (find(id) == nullptr) {
        throw Error(ErrorCode::kPartnershipUnknownPool, "subchain " + std::to_string(id.value));
      }
      partnered.insert(id);
    }
  }

  std::vector<Subchain> out;
  for (const auto& s : subchains) {
    if (!partnered.contains(s.id)) out.push_back(s);
  }

  for (const auto& p : partnerships) {
    std::vector<const Subchain*> branches;
    for (SubchainId id : p.pools) branches.push_back(find(id));
    std::sort(branches.begin(), branches.end(),
              [](const Subchain* a, const Subchain* b) { return a->id < b->id; });

    Subchain merged;
    merged.id = SubchainId{next_id++};
    merged.phase = Phase::kSecondary;

    std::set<MinerId> members;
    std::size_t weight_total = 0;
    for (const auto* b : branches) {
      members.insert(b->members.begin(), b->members.end());
      weight_total += b->members.size();
      merged.parents.push_back(b->id);
    }
    merged.members.assign(members.begin(), members.end());

    const auto& first = branches.front()->model;
    merged.model = ModelParams{first.spec, std::vector<double>(first.values.size(), 0.0)};
    for (const auto* b : branches) {
      if (b->model.spec != first.spec) {
        throw Error(ErrorCode::kDimensionMismatch, "merging subchains with different models");
      }
      const double w = static_cast<double>(b->members.size()) / static_cast<double>(weight_total);
      for (std::size_t i = 0; i < merged.model.values.size(); ++i) {
        merged.model.values[i] += w * b->model.values[i];
      }
    }
    merged.initial_model = merged.model;

    std::vector<std::uint8_t> heads;
    for (const auto* b : branches) {
      const Digest h = b->ledger.head();
      heads.insert(heads.end(), h.begin(), h.end());
    }
    merged.ledger.anchor = sha256(heads);

    merged.host = branches.front()->host;
    if (!p.managers.empty()) merged.host = p.managers.front();
    out.push_back(std::move(merged));
  }
  return out;
}

}  // namespace poflsc
