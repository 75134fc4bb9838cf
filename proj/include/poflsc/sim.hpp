#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "poflsc/config.hpp"
#include "poflsc/learner.hpp"
#include "poflsc/pool_formation.hpp"
#include "poflsc/subchain.hpp"
#include "poflsc/topology.hpp"
#include "poflsc/valuation.hpp"
#include "poflsc/verification.hpp"

namespace poflsc {

struct SimClock {
  Millis now = 0.0;
  std::uint64_t sub_block_index = 0;
  Phase phase = Phase::kInitial;
};

// Data, population and the phase-one pools of a scenario.
struct Scenario {
  ScenarioConfig config;
  Dataset ds;
  std::vector<std::size_t> holdout;
  std::vector<Shard> shards;  // indexed by MinerId
  std::unique_ptr<Topology> topo;
  ModelParams params0;
  Digest anchor{};
  CandidateLists lists;
  std::vector<CorePool> pools;
  FormationTrace formation;
};

ResponseTimeMatrix scenario_matrix(const ScenarioConfig& config);
Dataset scenario_dataset(const ScenarioConfig& config);

// Throws NO_POOL_FORMED when no pool exceeds the threshold.
Scenario prepare_scenario(const ScenarioConfig& config);

// SV descending, ties to the lower id; the prefix whose round times fit in
// capacity.
std::vector<SubchainId> schedule_subchains(const std::map<SubchainId, double>& sv_by_subchain,
                                           const std::map<SubchainId, Millis>& round_time,
                                           Millis capacity);

struct AdvanceRule {
  std::size_t audits_min = 0;
  std::size_t challenges_min = 0;
  double qualification_floor = 0.0;
};

// SECONDARY moves to VERIFICATION once a secondary round has run, candidacy
// holds and the latest accuracy reaches the floor. Other phases are returned
// unchanged.
Phase advance_phase(const Subchain& subchain, const SubchainVerification& state,
                    const AdvanceRule& rule);

struct ShrinkCurve {
  std::vector<ShrinkPoint> descending;
  std::vector<ShrinkPoint> ascending;
};

struct PoolValuation {
  SubchainId pool;
  std::vector<MinerId> members;
  double full_accuracy = 0.0;   // v(N)
  double empty_accuracy = 0.0;  // v of the empty coalition
  std::map<Estimator, ShapleyReport> reports;
  std::map<Estimator, ShrinkCurve> shrink;
};

ShapleyReport estimate(const Scenario& s, std::span<const MinerId> members, Estimator e,
                       const ValueFunction& v);

// Shapley reports and shrink curves of one pool for each estimator.
PoolValuation valuate_pool(const Scenario& s, const CorePool& pool,
                           std::span<const Estimator> estimators);

struct ScenarioReport {
  ScenarioConfig config;
  std::size_t pools_formed = 0;
  std::vector<Subchain> subchains;  // ascending id, retired ones included
  std::optional<SubchainId> winner;
  Chain main_record;  // winner's chain, else the demonstration subchain's
  VerificationState verification;
  PoolValuation demo;
  std::vector<nlohmann::json> trace;
};

ScenarioReport run_block(const ScenarioConfig& config);

}  // namespace poflsc
