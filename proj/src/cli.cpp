#include "poflsc/cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "poflsc/config.hpp"
#include "poflsc/error.hpp"
#include "poflsc/ledger.hpp"
#include "poflsc/report.hpp"
#include "poflsc/sim.hpp"
#include "poflsc/verification.hpp"

namespace poflsc {

namespace {

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfigInvalid:
    case ErrorCode::kIo:
    case ErrorCode::kParse:
    case ErrorCode::kBadMagic:
    case ErrorCode::kCountMismatch:
    case ErrorCode::kTruncatedFile:
    case ErrorCode::kDatasetTooSmall:
      return kExitConfig;
    case ErrorCode::kNoPoolFormed:
      return kExitNoPool;
    default:
      return kExitFailure;
  }
}

ScenarioConfig load(const std::string& path, const std::optional<std::uint64_t>& seed) {
  ScenarioConfig c = load_config(path);
  if (seed) c.master_seed = *seed;
  return c;
}

std::optional<std::set<ReservationOrder>> parse_orders(const std::string& s) {
  if (s == "both") return std::set{ReservationOrder::kDescending, ReservationOrder::kAscending};
  if (auto o = parse_order(s)) return std::set{*o};
  return std::nullopt;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Subchain consensus simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string estimator_name;
  std::string order_name = "both";
  std::string chain_path;
  std::string report_path;
  std::optional<std::uint64_t> seed;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "scenario file (.toml or .json)")->required();
    sub->add_option("--out", out_dir, "output directory")->required();
    sub->add_option("--seed", seed, "overrides master_seed");
  };

  auto* simulate = app.add_subcommand("simulate", "run one block; writes report.json, chain.bin, trace.jsonl");
  add_common(simulate);

  auto* valuate = app.add_subcommand("valuate", "Shapley values of the demonstration pool");
  add_common(valuate);
  valuate->add_option("--estimator", estimator_name, "loo, tmc, gshapley or exact")->required();

  auto* shrink = app.add_subcommand("shrink", "pool-shrink curves under both reservation orders");
  add_common(shrink);
  shrink->add_option("--estimator", estimator_name, "defaults to the config's report_estimators");
  shrink->add_option("--order", order_name, "asc, desc or both");

  auto* verify = app.add_subcommand("verify", "check a chain dump");
  verify->add_option("chain", chain_path, "chain.bin")->required();

  auto* emit = app.add_subcommand("emit", "re-emit every CSV from a report.json");
  emit->add_option("--report", report_path, "report.json")->required();
  emit->add_option("--out", out_dir, "output directory")->required();
  emit->add_option("--order", order_name, "asc, desc or both");

  auto* exporter = app.add_subcommand("export", "write the scenario's response matrix and dataset as CSV");
  add_common(exporter);

  std::vector<const char*> argv{"poflsc"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (simulate->parsed()) {
      const auto report = run_block(load(config_path, seed));
      write_outputs(report, out_dir);
      out << "pools " << report.pools_formed << ", winner "
          << (report.winner ? std::to_string(report.winner->value) : std::string("none")) << "\n";
      return kExitOk;
    }

    if (valuate->parsed() || shrink->parsed()) {
      auto config = load(config_path, seed);
      std::vector<Estimator> estimators = config.report_estimators;
      if (!estimator_name.empty()) {
        auto e = parse_estimator(estimator_name);
        if (!e) {
          err << "unknown estimator " << estimator_name << "\n";
          return kExitConfig;
        }
        estimators = {*e};
        if (*e == Estimator::kExact && config.pool_size_cap > 10) {
          throw Error(ErrorCode::kConfigInvalid,
                      "pool_size_cap: EXACT valuation needs pools of at most 10 members");
        }
      }
      const auto orders = parse_orders(order_name);
      if (!orders) {
        err << "unknown order " << order_name << "\n";
        return kExitConfig;
      }
      const auto scenario = prepare_scenario(config);
      const auto valuation = valuate_pool(scenario, scenario.pools.front(), estimators);
      const auto files = valuate->parsed() ? write_valuation_csvs(valuation, out_dir)
                                           : write_shrink_csvs(valuation, *orders, out_dir);
      for (const auto& f : files) out << f.string() << "\n";
      return kExitOk;
    }

    if (verify->parsed()) {
      Chain chain;
      try {
        chain = read_chain(chain_path);
      } catch (const Error& e) {
        // A short file is an input problem; malformed content is a failed check.
        if (e.code() != ErrorCode::kParse) throw;
        out << "FAIL PARSE: " << e.what() << "\n";
        return kExitVerifyFail;
      }
      const auto check = type_one_check(chain);
      if (check.clean()) {
        out << "OK " << chain.blocks.size() << " sub-blocks, " << chain.tx_count()
            << " transactions\n";
        return kExitOk;
      }
      for (const auto& f : check.findings) {
        out << "FAIL " << to_string(f.kind) << " sub-block " << f.sub_block;
        if (f.kind == FindingKind::kMissingResult) out << " tx " << f.tx_number;
        out << ": " << f.detail << "\n";
      }
      return kExitVerifyFail;
    }

    if (emit->parsed()) {
      const auto orders = parse_orders(order_name);
      if (!orders) {
        err << "unknown order " << order_name << "\n";
        return kExitConfig;
      }
      std::ifstream in(report_path, std::ios::binary);
      if (!in) throw Error(ErrorCode::kIo, "cannot read " + report_path);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(in);
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kParse, std::string("report: ") + e.what());
      }
      if (!j.contains("demo")) throw Error(ErrorCode::kParse, "report has no demo section");
      const auto valuation = valuation_from_json(j.at("demo"));
      auto files = write_valuation_csvs(valuation, out_dir);
      for (auto& f : write_shrink_csvs(valuation, *orders, out_dir)) files.push_back(f);
      for (const auto& f : files) out << f.string() << "\n";
      return kExitOk;
    }

    if (exporter->parsed()) {
      const auto config = load(config_path, seed);
      std::filesystem::create_directories(out_dir);
      std::ostringstream matrix, data;
      write_matrix_csv(scenario_matrix(config), matrix);
      write_dataset_csv(scenario_dataset(config), data);
      write_text(std::filesystem::path(out_dir) / "response_matrix.csv", matrix.str());
      write_text(std::filesystem::path(out_dir) / "dataset.csv", data.str());
      return kExitOk;
    }
  } catch (const Error& e) {
    err << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    err << e.what() << "\n";
    return kExitConfig;
  }
  return kExitFailure;
}

}  // namespace poflsc
