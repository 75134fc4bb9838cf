#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "poflsc/types.hpp"
#include "poflsc/valuation.hpp"

namespace poflsc {

// Tunables for one simulated block.
struct ScenarioConfig {
  std::uint32_t miner_count = 100;
  std::uint32_t samples_per_miner = 30;
  Millis sub_block_time = 2000.0;
  std::uint32_t core_pool_threshold = 19;
  std::uint32_t pool_size_cap = 20;
  std::uint32_t audits_min = 1;
  std::uint32_t challenges_min = 1;
  int local_epochs = 1;
  double learning_rate = 0.1;
  Millis rt_mean = 10.0;
  Millis rt_std = 3.0;
  std::uint64_t master_seed = 1;
  Estimator sv_estimator = Estimator::kGShapley;
  ReservationOrder reservation_order = ReservationOrder::kDescending;

  double qualification_floor = 0.0;
  std::uint32_t core_rounds = 3;
  std::uint32_t max_sub_blocks = 8;
  int value_rounds = 5;
  std::uint32_t sv_permutations = 200;
  double truncation_tol = 0.01;
  Millis compute_mean = 5.0;  // one local epoch
  Millis compute_std = 1.0;
  std::uint32_t partnership_threshold = 2;
  std::uint32_t partnership_cap = 3;
  std::uint32_t challenge_issuers = 2;
  std::uint32_t challenge_subsets = 3;
  std::uint32_t challenge_subset_size = 10;

  int synth_classes = 10;
  std::uint32_t synth_dim = 16;
  std::uint32_t synth_per_class = 100;
  double synth_separation = 3.0;
  double holdout_fraction = 0.2;
  std::uint32_t hidden_units = 0;
  std::string idx_images;
  std::string idx_labels;
  std::string response_matrix_csv;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> hidden_edges;
  std::vector<Estimator> report_estimators{Estimator::kLoo, Estimator::kGShapley};
  std::string previous_block_head;  // hex; empty means the genesis marker

  // Directory that relative file paths above are resolved against.
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::string& p) const;
};

// Throws CONFIG_INVALID naming the first offending field.
void validate(const ScenarioConfig& c);

nlohmann::json to_json(const ScenarioConfig& c);
// Unknown keys are rejected; missing keys keep their defaults.
ScenarioConfig config_from_json(const nlohmann::json& j);

// Flat TOML subset: key = value lines, # comments, strings, integers, floats,
// booleans and (nested) arrays. Tables are not supported.
nlohmann::json parse_flat_toml(std::string_view text);

// .json files are read as JSON, anything else as TOML. Validates.
ScenarioConfig load_config(const std::filesystem::path& path);

}  // namespace poflsc
