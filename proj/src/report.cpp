#include "poflsc/report.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "poflsc/crypto.hpp"
#include "poflsc/error.hpp"

namespace poflsc {

namespace {

nlohmann::json entries_json(const ShapleyReport& r) {
  auto arr = nlohmann::json::array();
  for (const auto& e : r.entries) {
    arr.push_back({{"miner", e.miner.value}, {"mean", e.mean}, {"std", e.std}});
  }
  return arr;
}

nlohmann::json curve_json(const std::vector<ShrinkPoint>& pts) {
  auto arr = nlohmann::json::array();
  for (const auto& p : pts) arr.push_back({{"size", p.size}, {"accuracy", p.accuracy}});
  return arr;
}

std::vector<ShrinkPoint> curve_from_json(const nlohmann::json& j) {
  std::vector<ShrinkPoint> out;
  for (const auto& p : j) out.push_back({p.at("size").get<std::size_t>(), p.at("accuracy").get<double>()});
  return out;
}

std::vector<std::uint32_t> ids(std::span<const MinerId> ms) {
  std::vector<std::uint32_t> out;
  for (auto m : ms) out.push_back(m.value);
  return out;
}

nlohmann::json subchain_json(const Subchain& sc, const VerificationState& vs) {
  nlohmann::json j;
  j["id"] = sc.id.value;
  j["members"] = ids(sc.members);
  j["host"] = sc.host.value;
  j["phase"] = to_string(sc.phase);
  j["retired"] = sc.retired;
  std::vector<std::uint32_t> parents;
  for (auto p : sc.parents) parents.push_back(p.value);
  j["parents"] = parents;
  j["accuracies"] = sc.accuracies;
  j["rounds"] = sc.rounds.size();
  j["model_version"] = sc.version;
  j["model_hash"] = to_hex(params_hash(sc.model));
  j["sub_blocks"] = sc.ledger.blocks.size();
  j["transactions"] = sc.ledger.tx_count();
  j["ledger_head"] = to_hex(sc.ledger.head());
  j["ledger_digest"] = to_hex(sha256(serialize_chain(sc.ledger)));
  auto it = vs.subchains.find(sc.id);
  const SubchainVerification v = it == vs.subchains.end() ? SubchainVerification{} : it->second;
  j["challenges_received"] = v.challenges_received;
  j["challenge_accuracies"] = v.challenge_accuracies;
  j["audits_passed"] = v.audits_passed;
  j["audits_failed"] = v.audits_failed;
  return j;
}

}  // namespace

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string estimator_slug(Estimator e) {
  std::string s(to_string(e));
  for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

nlohmann::json valuation_to_json(const PoolValuation& v) {
  nlohmann::json j;
  j["subchain"] = v.pool.value;
  j["members"] = ids(v.members);
  j["full_accuracy"] = v.full_accuracy;
  j["empty_accuracy"] = v.empty_accuracy;
  nlohmann::json reports = nlohmann::json::object();
  for (const auto& [e, r] : v.reports) {
    reports[std::string(to_string(e))] = {{"iterations", r.iterations}, {"entries", entries_json(r)}};
  }
  j["shapley"] = reports;
  nlohmann::json shrink = nlohmann::json::object();
  for (const auto& [e, c] : v.shrink) {
    shrink[std::string(to_string(e))] = {{"descending", curve_json(c.descending)},
                                         {"ascending", curve_json(c.ascending)}};
  }
  j["shrink"] = shrink;
  return j;
}

PoolValuation valuation_from_json(const nlohmann::json& j) {
  try {
    PoolValuation v;
    v.pool = SubchainId{j.at("subchain").get<std::uint32_t>()};
    for (auto m : j.at("members")) v.members.push_back(MinerId{m.get<std::uint32_t>()});
    v.full_accuracy = j.at("full_accuracy").get<double>();
    v.empty_accuracy = j.at("empty_accuracy").get<double>();
    for (const auto& [name, r] : j.at("shapley").items()) {
      auto e = parse_estimator(name);
      if (!e) throw Error(ErrorCode::kParse, "unknown estimator " + name);
      ShapleyReport rep{*e, {}, r.at("iterations").get<std::size_t>()};
      for (const auto& x : r.at("entries")) {
        rep.entries.push_back({MinerId{x.at("miner").get<std::uint32_t>()},
                               x.at("mean").get<double>(), x.at("std").get<double>()});
      }
      v.reports[*e] = std::move(rep);
    }
    for (const auto& [name, c] : j.at("shrink").items()) {
      auto e = parse_estimator(name);
      if (!e) throw Error(ErrorCode::kParse, "unknown estimator " + name);
      v.shrink[*e] = {curve_from_json(c.at("descending")), curve_from_json(c.at("ascending"))};
    }
    return v;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::kParse, std::string("report valuation: ") + ex.what());
  }
}

nlohmann::json report_to_json(const ScenarioReport& r) {
  nlohmann::json j;
  j["config"] = to_json(r.config);
  j["pools_formed"] = r.pools_formed;
  j["winner"] = r.winner ? nlohmann::json(r.winner->value) : nlohmann::json(nullptr);
  auto subs = nlohmann::json::array();
  for (const auto& sc : r.subchains) subs.push_back(subchain_json(sc, r.verification));
  j["subchains"] = subs;
  j["ledger_digest"] = to_hex(sha256(serialize_chain(r.main_record)));
  j["ledger_sub_blocks"] = r.main_record.blocks.size();
  nlohmann::json rel = nlohmann::json::object();
  for (const auto& [m, t] : r.verification.miners) {
    rel[std::to_string(m.value)] = {{"passed", t.passed},
                                    {"failed", t.failed},
                                    {"reliability", r.verification.reliability(m)}};
  }
  j["reliability"] = rel;
  j["demo"] = valuation_to_json(r.demo);
  return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

void write_outputs(const ScenarioReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "report.json", report_to_json(r).dump(2) + "\n");
  write_chain(r.main_record, dir / "chain.bin");
  std::string lines;
  for (const auto& l : r.trace) lines += l.dump() + "\n";
  write_text(dir / "trace.jsonl", lines);
}

void write_sv_csv(const ShapleyReport& report, std::ostream& out) {
  out << "miner,mean,std\n";
  for (const auto& e : report.entries) {
    out << e.miner.value << ',' << format_real(e.mean) << ',' << format_real(e.std) << '\n';
  }
}

void write_histogram_csv(const ShapleyReport& report, std::size_t bins, std::ostream& out) {
  out << "bin,lower,upper,count\n";
  if (report.entries.empty() || bins == 0) return;
  double lo = report.entries.front().mean;
  double hi = lo;
  for (const auto& e : report.entries) {
    lo = std::min(lo, e.mean);
    hi = std::max(hi, e.mean);
  }
  const double width = (hi - lo) / static_cast<double>(bins);
  std::vector<std::size_t> counts(bins, 0);
  for (const auto& e : report.entries) {
    std::size_t b = width > 0.0 ? static_cast<std::size_t>((e.mean - lo) / width) : 0;
    counts[std::min(b, bins - 1)]++;
  }
  for (std::size_t b = 0; b < bins; ++b) {
    const double lower = lo + width * static_cast<double>(b);
    const double upper = b + 1 == bins ? hi : lo + width * static_cast<double>(b + 1);
    out << b << ',' << format_real(lower) << ',' << format_real(upper) << ',' << counts[b]
        << '\n';
  }
}

void write_shrink_csv(const ShrinkCurve& curve, double full_accuracy,
                      const std::set<ReservationOrder>& orders, std::ostream& out) {
  const bool desc = orders.contains(ReservationOrder::kDescending);
  const bool asc = orders.contains(ReservationOrder::kAscending);
  out << "size";
  if (desc) out << ",accuracy_descending";
  if (asc) out << ",accuracy_ascending";
  if (desc) out << ",relative_drop_descending";
  if (asc) out << ",relative_drop_ascending";
  out << '\n';
  auto drop = [&](double a) { return full_accuracy > 0.0 ? 1.0 - a / full_accuracy : 0.0; };
  const std::size_t n = std::max(curve.descending.size(), curve.ascending.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ref = i < curve.descending.size() ? curve.descending[i] : curve.ascending[i];
    out << ref.size;
    if (desc) out << ',' << format_real(curve.descending.at(i).accuracy);
    if (asc) out << ',' << format_real(curve.ascending.at(i).accuracy);
    if (desc) out << ',' << format_real(drop(curve.descending.at(i).accuracy));
    if (asc) out << ',' << format_real(drop(curve.ascending.at(i).accuracy));
    out << '\n';
  }
}

std::vector<std::filesystem::path> write_valuation_csvs(const PoolValuation& v,
                                                        const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  for (const auto& [e, r] : v.reports) {
    const auto slug = estimator_slug(e);
    std::ostringstream sv, hist;
    write_sv_csv(r, sv);
    write_histogram_csv(r, 20, hist);
    written.push_back(dir / ("sv_" + slug + ".csv"));
    write_text(written.back(), sv.str());
    written.push_back(dir / ("sv_" + slug + "_hist.csv"));
    write_text(written.back(), hist.str());
  }
  return written;
}

std::vector<std::filesystem::path> write_shrink_csvs(const PoolValuation& v,
                                                     const std::set<ReservationOrder>& orders,
                                                     const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  for (const auto& [e, c] : v.shrink) {
    std::ostringstream out;
    write_shrink_csv(c, v.full_accuracy, orders, out);
    written.push_back(dir / ("shrink_" + estimator_slug(e) + ".csv"));
    write_text(written.back(), out.str());
  }
  return written;
}

}  // namespace poflsc
