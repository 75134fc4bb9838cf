#include <doctest.h>

#include <algorithm>
#include <set>

#include "oracles.hpp"
#include "poflsc/pool_formation.hpp"
#include "poflsc/rng.hpp"
#include "poflsc/topology.hpp"

using namespace poflsc;

namespace {

std::vector<double> rts_of(const CandidateList& l) {
  std::vector<double> out;
  for (const auto& e : l.entries) out.push_back(e.rt);
  return out;
}

CandidateList list_from(std::vector<double> rts, double t_sub) {
  std::map<MinerId, Millis> m;
  std::vector<MinerId> order;
  for (std::uint32_t i = 0; i < rts.size(); ++i) {
    m[MinerId{i + 1}] = rts[i];
    order.push_back(MinerId{i + 1});
  }
  return build_candidate_list(MinerId{0}, m, t_sub, order);
}

// Lists where everyone in `group` lists everyone else in it.
CandidateLists lists_of(const std::map<std::uint32_t, std::vector<std::uint32_t>>& spec) {
  CandidateLists out;
  for (const auto& [owner, peers] : spec) {
    CandidateList l{MinerId{owner}, {}};
    double rt = 1.0;
    for (auto p : peers) l.entries.push_back({MinerId{p}, rt++});
    out[MinerId{owner}] = l;
  }
  return out;
}

}  // namespace

TEST_CASE("candidate list: sum rule keeps {3, 4}") {
  const auto l = list_from({3, 4, 5, 12}, 10);
  CHECK(rts_of(l) == std::vector<double>{3, 4});
  CHECK(l.total() == 7);
}

TEST_CASE("candidate list: shorter arrival displaces the longest") {
  const auto l = list_from({9, 8, 2}, 10);
  CHECK(rts_of(l) == std::vector<double>{2, 8});
  CHECK(l.total() == 10);
}

TEST_CASE("candidate list: peers at or above T_sub never stay") {
  CHECK(list_from({12, 15}, 10).entries.empty());
  CHECK(list_from({10}, 10).entries.empty());
  CHECK(rts_of(list_from({12, 9.5}, 10)) == std::vector<double>{9.5});
}

TEST_CASE("candidate list: empty input") {
  CHECK(build_candidate_list(MinerId{0}, {}, 10.0).entries.empty());
}

TEST_CASE("candidate list trace records adds and evictions") {
  FormationTrace trace;
  std::map<MinerId, Millis> m{{MinerId{1}, 9}, {MinerId{2}, 8}};
  (void)build_candidate_list(MinerId{0}, m, 10, &trace);
  REQUIRE(trace.size() == 3);
  CHECK(trace[0].kind == FormationEventKind::kAdd);
  CHECK(trace[1].kind == FormationEventKind::kAdd);
  CHECK(trace[2].kind == FormationEventKind::kEvict);
  CHECK(trace[2].subject == MinerId{1});
}

TEST_CASE("candidate list matches the rule oracle on random instances") {
  Rng rng(123);
  for (int trial = 0; trial < 300; ++trial) {
    const auto n = 1 + rng.below(15);
    const double t_sub = rng.uniform(1.0, 60.0);
    std::map<MinerId, Millis> rts;
    std::map<std::uint32_t, double> plain;
    std::vector<std::uint32_t> order;
    for (std::uint32_t i = 1; i <= n; ++i) {
      // Coarse values force ties.
      const double rt = std::floor(rng.uniform(0.0, 20.0)) + 1.0;
      rts[MinerId{i}] = rt;
      plain[i] = rt;
      order.push_back(i);
    }
    rng.shuffle(std::span(order));
    std::vector<MinerId> arrival;
    for (auto i : order) arrival.push_back(MinerId{i});
    const auto got = build_candidate_list(MinerId{0}, rts, t_sub, arrival);
    const auto want = oracle::candidate_list(plain, t_sub, order);
    REQUIRE(got.entries.size() == want.size());
    for (std::size_t k = 0; k < want.size(); ++k) {
      CHECK(got.entries[k].id.value == want[k].id);
      CHECK(got.entries[k].rt == want[k].rt);
    }
    CHECK((got.total() <= t_sub || got.entries.size() == 1));
  }
}

TEST_CASE("smallest viable pool") {
  const auto lists = lists_of({{0, {1, 2}}, {1, {0, 2}}, {2, {0, 1}}});
  const auto pool = establish_core_pool(lists, 2);
  REQUIRE(pool);
  CHECK(pool->members == std::vector<MinerId>{MinerId{0}, MinerId{1}, MinerId{2}});
}

TEST_CASE("reject stops selection and the threshold decides") {
  // Seed trio {0, 1, 2}; 3 is proposed but missing from 2's list.
  const auto lists =
      lists_of({{0, {1, 2, 3}}, {1, {0, 2, 3}}, {2, {0, 1}}, {3, {0, 1}}});
  FormationTrace trace;
  CHECK(!establish_core_pool(lists, 3, SIZE_MAX, &trace));
  CHECK(std::any_of(trace.begin(), trace.end(),
                    [](const FormationEvent& e) { return e.kind == FormationEventKind::kReject; }));
  CHECK(std::any_of(trace.begin(), trace.end(), [](const FormationEvent& e) {
    return e.kind == FormationEventKind::kDemolish;
  }));
  // Confirmed members are kept after the reject.
  const auto kept = establish_core_pool(lists, 2);
  REQUIRE(kept);
  CHECK(kept->members.size() == 3);
}

TEST_CASE("no mutual pair, no pool") {
  const auto lists = lists_of({{0, {1}}, {1, {2}}, {2, {0}}});
  CHECK(!establish_core_pool(lists, 1));
  CHECK(establish_core_pools(lists, 1).empty());
}

TEST_CASE("cap limits growth") {
  std::map<std::uint32_t, std::vector<std::uint32_t>> spec;
  for (std::uint32_t i = 0; i < 8; ++i) {
    for (std::uint32_t j = 0; j < 8; ++j) {
      if (i != j) spec[i].push_back(j);
    }
  }
  const auto pool = establish_core_pool(lists_of(spec), 3, 5);
  REQUIRE(pool);
  CHECK(pool->members.size() == 5);
}

TEST_CASE("pool formation is independent of list map construction order") {
  Rng rng(5);
  const auto topo = Topology(gen_response_matrix(30, 10, 3, 17), gen_profiles(30, 5, 1, 3), 1);
  const auto lists = build_all_candidate_lists(topo, 500.0);
  CandidateLists rebuilt;
  std::vector<MinerId> keys;
  for (const auto& [k, v] : lists) keys.push_back(k);
  rng.shuffle(std::span(keys));
  for (auto k : keys) rebuilt.emplace(k, lists.at(k));
  CHECK(establish_core_pools(lists, 4, 8) == establish_core_pools(rebuilt, 4, 8));
}

// A later member sits in every earlier member's list, so each pair is linked
// in at least one direction.
TEST_CASE("every established pool is linked pairwise") {
  const auto topo = Topology(gen_response_matrix(60, 10, 3, 9), gen_profiles(60, 5, 1, 3), 1);
  const auto lists = build_all_candidate_lists(topo, 500.0);
  const auto pools = establish_core_pools(lists, 5, 12);
  REQUIRE(!pools.empty());
  std::set<std::vector<MinerId>> distinct;
  for (const auto& p : pools) {
    CHECK(p.members.size() > 5);
    CHECK(p.members.size() <= 12);
    CHECK(std::is_sorted(p.members.begin(), p.members.end()));
    CHECK(distinct.insert(p.members).second);
    for (auto a : p.members) {
      for (auto b : p.members) {
        if (a < b) CHECK((lists.at(a).contains(b) || lists.at(b).contains(a)));
      }
    }
  }
}

TEST_CASE("host selection") {
  ResponseTimeMatrix rts(3);
  rts.set(MinerId{0}, MinerId{1}, 5);
  rts.set(MinerId{0}, MinerId{2}, 6);
  rts.set(MinerId{1}, MinerId{2}, 2);
  auto profiles = gen_profiles(3, 5, 1, 1);
  const CorePool pool{SubchainId{0}, {MinerId{0}, MinerId{1}, MinerId{2}}, MinerId{0}};
  // Mean rt: 0 -> 5.5, 1 -> 3.5, 2 -> 4.
  CHECK(select_host(pool, profiles, rts) == MinerId{1});

  profiles[1].reliability = 0.2;
  CHECK(select_host(pool, profiles, rts) == MinerId{2});

  // Uniform scaling keeps the argmin.
  ResponseTimeMatrix scaled(3);
  scaled.set(MinerId{0}, MinerId{1}, 50);
  scaled.set(MinerId{0}, MinerId{2}, 60);
  scaled.set(MinerId{1}, MinerId{2}, 20);
  CHECK(select_host(pool, profiles, scaled) == select_host(pool, profiles, rts));

  // Ties go to the lowest id.
  ResponseTimeMatrix flat(3);
  flat.set(MinerId{0}, MinerId{1}, 1);
  flat.set(MinerId{0}, MinerId{2}, 1);
  flat.set(MinerId{1}, MinerId{2}, 1);
  CHECK(select_host(pool, gen_profiles(3, 5, 1, 1), flat) == MinerId{0});
}

TEST_CASE("partnerships") {
  auto response = [](Millis d) {
    return [d](MinerId, MinerId) { return d; };
  };
  const std::vector<PoolHead> one{{SubchainId{0}, MinerId{4}}};
  CHECK(form_partnerships(one, response(1.0), 100.0, 2).empty());

  const std::vector<PoolHead> three{
      {SubchainId{0}, MinerId{4}}, {SubchainId{1}, MinerId{9}}, {SubchainId{2}, MinerId{4}}};
  const auto ps = form_partnerships(three, response(1.0), 100.0, 2);
  REQUIRE(ps.size() == 1);
  CHECK(ps[0].pools == std::vector<SubchainId>{SubchainId{0}, SubchainId{1}, SubchainId{2}});
  CHECK(ps[0].managers == std::vector<MinerId>{MinerId{4}, MinerId{9}, MinerId{4}});

  CHECK(form_partnerships(three, response(150.0), 100.0, 2).empty());
}
