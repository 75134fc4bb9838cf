#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "poflsc/sim.hpp"
#include "poflsc/valuation.hpp"

namespace poflsc {

nlohmann::json report_to_json(const ScenarioReport& r);
nlohmann::json valuation_to_json(const PoolValuation& v);
PoolValuation valuation_from_json(const nlohmann::json& j);

// Writes report.json, chain.bin and trace.jsonl.
void write_outputs(const ScenarioReport& r, const std::filesystem::path& dir);

// Doubles are printed with 17 significant digits so a CSV re-emitted from
// report.json matches the original byte for byte.
std::string format_real(double v);

void write_sv_csv(const ShapleyReport& report, std::ostream& out);
// Equal-width bins of the mean SV over its observed range.
void write_histogram_csv(const ShapleyReport& report, std::size_t bins, std::ostream& out);
void write_shrink_csv(const ShrinkCurve& curve, double full_accuracy,
                      const std::set<ReservationOrder>& orders, std::ostream& out);

std::string estimator_slug(Estimator e);

// sv_<est>.csv and sv_<est>_hist.csv for every estimator in the valuation.
std::vector<std::filesystem::path> write_valuation_csvs(const PoolValuation& v,
                                                        const std::filesystem::path& dir);
// shrink_<est>.csv per estimator.
std::vector<std::filesystem::path> write_shrink_csvs(const PoolValuation& v,
                                                     const std::set<ReservationOrder>& orders,
                                                     const std::filesystem::path& dir);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace poflsc
