#include "poflsc/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

#include "poflsc/crypto.hpp"
#include "poflsc/error.hpp"

namespace poflsc {

namespace {

[[noreturn]] void invalid(std::string_view field, const std::string& why) {
  throw Error(ErrorCode::kConfigInvalid, std::string(field) + ": " + why);
}

template <typename T>
T get_uint(const nlohmann::json& v, std::string_view field) {
  if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
    invalid(field, "expected a non-negative integer");
  }
  const auto u = v.get<std::uint64_t>();
  if (u > std::numeric_limits<T>::max()) invalid(field, "out of range");
  return static_cast<T>(u);
}

int get_int(const nlohmann::json& v, std::string_view field) {
  if (!v.is_number_integer()) invalid(field, "expected an integer");
  const auto i = v.get<std::int64_t>();
  if (i < std::numeric_limits<int>::min() || i > std::numeric_limits<int>::max()) {
    invalid(field, "out of range");
  }
  return static_cast<int>(i);
}

double get_real(const nlohmann::json& v, std::string_view field) {
  if (!v.is_number()) invalid(field, "expected a number");
  return v.get<double>();
}

std::string get_string(const nlohmann::json& v, std::string_view field) {
  if (!v.is_string()) invalid(field, "expected a string");
  return v.get<std::string>();
}

Estimator get_estimator(const nlohmann::json& v, std::string_view field) {
  auto e = parse_estimator(get_string(v, field));
  if (!e) invalid(field, "unknown estimator " + v.get<std::string>());
  return *e;
}

using Setter = std::function<void(ScenarioConfig&, const nlohmann::json&)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = [] {
    std::map<std::string, Setter, std::less<>> t;
#define POFLSC_UINT(name, type) \
  t[#name] = [](ScenarioConfig& c, const nlohmann::json& v) { c.name = get_uint<type>(v, #name); }
#define POFLSC_REAL(name) \
  t[#name] = [](ScenarioConfig& c, const nlohmann::json& v) { c.name = get_real(v, #name); }
#define POFLSC_INT(name) \
  t[#name] = [](ScenarioConfig& c, const nlohmann::json& v) { c.name = get_int(v, #name); }
#define POFLSC_STRING(name) \
  t[#name] = [](ScenarioConfig& c, const nlohmann::json& v) { c.name = get_string(v, #name); }
    POFLSC_UINT(miner_count, std::uint32_t);
    POFLSC_UINT(samples_per_miner, std::uint32_t);
    POFLSC_REAL(sub_block_time);
    POFLSC_UINT(core_pool_threshold, std::uint32_t);
    POFLSC_UINT(pool_size_cap, std::uint32_t);
    POFLSC_UINT(audits_min, std::uint32_t);
    POFLSC_UINT(challenges_min, std::uint32_t);
    POFLSC_INT(local_epochs);
    POFLSC_REAL(learning_rate);
    POFLSC_REAL(rt_mean);
    POFLSC_REAL(rt_std);
    POFLSC_UINT(master_seed, std::uint64_t);
    POFLSC_REAL(qualification_floor);
    POFLSC_UINT(core_rounds, std::uint32_t);
    POFLSC_UINT(max_sub_blocks, std::uint32_t);
    POFLSC_INT(value_rounds);
    POFLSC_UINT(sv_permutations, std::uint32_t);
    POFLSC_REAL(truncation_tol);
    POFLSC_REAL(compute_mean);
    POFLSC_REAL(compute_std);
    POFLSC_UINT(partnership_threshold, std::uint32_t);
    POFLSC_UINT(partnership_cap, std::uint32_t);
    POFLSC_UINT(challenge_issuers, std::uint32_t);
    POFLSC_UINT(challenge_subsets, std::uint32_t);
    POFLSC_UINT(challenge_subset_size, std::uint32_t);
    POFLSC_INT(synth_classes);
    POFLSC_UINT(synth_dim, std::uint32_t);
    POFLSC_UINT(synth_per_class, std::uint32_t);
    POFLSC_REAL(synth_separation);
    POFLSC_REAL(holdout_fraction);
    POFLSC_UINT(hidden_units, std::uint32_t);
    POFLSC_STRING(idx_images);
    POFLSC_STRING(idx_labels);
    POFLSC_STRING(response_matrix_csv);
    POFLSC_STRING(previous_block_head);
#undef POFLSC_UINT
#undef POFLSC_REAL
#undef POFLSC_INT
#undef POFLSC_STRING
    t["sv_estimator"] = [](ScenarioConfig& c, const nlohmann::json& v) {
      c.sv_estimator = get_estimator(v, "sv_estimator");
    };
    t["reservation_order"] = [](ScenarioConfig& c, const nlohmann::json& v) {
      auto o = parse_order(get_string(v, "reservation_order"));
      if (!o) invalid("reservation_order", "expected DESCENDING or ASCENDING");
      c.reservation_order = *o;
    };
    t["report_estimators"] = [](ScenarioConfig& c, const nlohmann::json& v) {
      if (!v.is_array()) invalid("report_estimators", "expected an array");
      c.report_estimators.clear();
      for (const auto& e : v) c.report_estimators.push_back(get_estimator(e, "report_estimators"));
    };
    t["hidden_edges"] = [](ScenarioConfig& c, const nlohmann::json& v) {
      if (!v.is_array()) invalid("hidden_edges", "expected an array of pairs");
      c.hidden_edges.clear();
      for (const auto& e : v) {
        if (!e.is_array() || e.size() != 2) invalid("hidden_edges", "expected [a, b] pairs");
        c.hidden_edges.emplace_back(get_uint<std::uint32_t>(e[0], "hidden_edges"),
                                    get_uint<std::uint32_t>(e[1], "hidden_edges"));
      }
    };
    return t;
  }();
  return table;
}

// --- flat TOML ---------------------------------------------------------------

class TomlReader {
 public:
  explicit TomlReader(std::string_view text) : text_(text) {}

  nlohmann::json document() {
    nlohmann::json out = nlohmann::json::object();
    while (true) {
      skip_blank_lines();
      if (at_end()) break;
      if (peek() == '[') fail("tables are not supported");
      const std::string key = read_key();
      skip_inline_space();
      expect('=');
      skip_inline_space();
      nlohmann::json value = read_value();
      skip_inline_space();
      if (!at_end() && peek() == '#') skip_comment();
      if (!at_end() && peek() != '\n' && peek() != '\r') fail("trailing characters after value");
      if (out.contains(key)) fail("duplicate key " + key);
      out[key] = std::move(value);
    }
    return out;
  }

 private:
  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return text_[pos_]; }

  [[noreturn]] void fail(const std::string& why) const {
    std::size_t line = 1;
    for (std::size_t i = 0; i < pos_ && i < text_.size(); ++i) line += text_[i] == '\n';
    throw Error(ErrorCode::kConfigInvalid, "TOML line " + std::to_string(line) + ": " + why);
  }

  void expect(char c) {
    if (at_end() || peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  void skip_inline_space() {
    while (!at_end() && (peek() == ' ' || peek() == '\t')) ++pos_;
  }

  void skip_comment() {
    while (!at_end() && peek() != '\n') ++pos_;
  }

  void skip_blank_lines() {
    while (!at_end()) {
      const char c = peek();
      if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        ++pos_;
      } else if (c == '#') {
        skip_comment();
      } else {
        break;
      }
    }
  }

  // Whitespace, newlines and comments are all allowed inside arrays.
  void skip_array_space() { skip_blank_lines(); }

  std::string read_key() {
    if (!at_end() && peek() == '"') return read_string();
    const auto start = pos_;
    while (!at_end() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' ||
                         peek() == '-')) {
      ++pos_;
    }
    if (start == pos_) fail("expected a key");
    return std::string(text_.substr(start, pos_ - start));
  }

  std::string read_string() {
    expect('"');
    std::string s;
    while (true) {
      if (at_end() || peek() == '\n') fail("unterminated string");
      const char c = text_[pos_++];
      if (c == '"') break;
      if (c == '\\') {
        if (at_end()) fail("unterminated escape");
        const char e = text_[pos_++];
        switch (e) {
          case '"': s += '"'; break;
          case '\\': s += '\\'; break;
          case 'n': s += '\n'; break;
          case 't': s += '\t'; break;
          default: fail(std::string("unsupported escape \\") + e);
        }
      } else {
        s += c;
      }
    }
    return s;
  }

  nlohmann::json read_value() {
    if (at_end()) fail("missing value");
    const char c = peek();
    if (c == '"') return read_string();
    if (c == '[') return read_array();
    if (text_.substr(pos_).starts_with("true")) {
      pos_ += 4;
      return true;
    }
    if (text_.substr(pos_).starts_with("false")) {
      pos_ += 5;
      return false;
    }
    return read_number();
  }

  nlohmann::json read_array() {
    expect('[');
    nlohmann::json arr = nlohmann::json::array();
    skip_array_space();
    if (!at_end() && peek() == ']') {
      ++pos_;
      return arr;
    }
    while (true) {
      skip_array_space();
      arr.push_back(read_value());
      skip_array_space();
      if (at_end()) fail("unterminated array");
      if (peek() == ',') {
        ++pos_;
        skip_array_space();
        if (!at_end() && peek() == ']') {
          ++pos_;
          return arr;
        }
        continue;
      }
      expect(']');
      return arr;
    }
  }

  nlohmann::json read_number() {
    const auto start = pos_;
    while (!at_end() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '+' ||
                         peek() == '-' || peek() == '.' || peek() == '_')) {
      ++pos_;
    }
    std::string tok;
    for (char ch : text_.substr(start, pos_ - start)) {
      if (ch != '_') tok += ch;
    }
    if (tok.empty()) fail("expected a value");
    const bool is_float = tok.find_first_of(".eE") != std::string::npos &&
                          !(tok.starts_with("0x") || tok.starts_with("0X"));
    try {
      std::size_t used = 0;
      if (is_float || tok == "inf" || tok == "+inf" || tok == "-inf" || tok == "nan") {
        const double d = std::stod(tok, &used);
        if (used != tok.size()) fail("bad number " + tok);
        return d;
      }
      if (tok.starts_with("-")) {
        const long long v = std::stoll(tok, &used, 10);
        if (used != tok.size()) fail("bad integer " + tok);
        return static_cast<std::int64_t>(v);
      }
      const std::string digits = tok.starts_with("+") ? tok.substr(1) : tok;
      const int base = digits.starts_with("0x") ? 16 : 10;
      const unsigned long long v =
          std::stoull(base == 16 ? digits.substr(2) : digits, &used, base);
      if (used != digits.size() - (base == 16 ? 2 : 0)) fail("bad integer " + tok);
      return static_cast<std::uint64_t>(v);
    } catch (const std::invalid_argument&) {
      fail("bad value " + tok);
    } catch (const std::out_of_range&) {
      fail("number out of range " + tok);
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

std::filesystem::path ScenarioConfig::resolve(const std::string& p) const {
  std::filesystem::path path(p);
  return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
}

void validate(const ScenarioConfig& c) {
  auto positive_real = [](double v, std::string_view f) {
    if (!std::isfinite(v) || v <= 0.0) invalid(f, "must be a finite positive number");
  };
  auto nonneg_real = [](double v, std::string_view f) {
    if (!std::isfinite(v) || v < 0.0) invalid(f, "must be a finite non-negative number");
  };
  if (c.miner_count == 0) invalid("miner_count", "must be positive");
  if (c.samples_per_miner == 0) invalid("samples_per_miner", "must be positive");
  positive_real(c.sub_block_time, "sub_block_time");
  if (c.core_pool_threshold == 0) invalid("core_pool_threshold", "must be positive");
  if (c.pool_size_cap == 0) invalid("pool_size_cap", "must be positive");
  if (c.core_pool_threshold > c.pool_size_cap) {
    invalid("core_pool_threshold", "must not exceed pool_size_cap");
  }
  if (c.pool_size_cap > c.miner_count) invalid("pool_size_cap", "must not exceed miner_count");
  if (c.local_epochs <= 0) invalid("local_epochs", "must be positive");
  positive_real(c.learning_rate, "learning_rate");
  positive_real(c.rt_mean, "rt_mean");
  nonneg_real(c.rt_std, "rt_std");
  if (!std::isfinite(c.qualification_floor) || c.qualification_floor < 0.0 ||
      c.qualification_floor > 1.0) {
    invalid("qualification_floor", "must lie in [0, 1]");
  }
  if (c.core_rounds == 0) invalid("core_rounds", "must be positive");
  if (c.max_sub_blocks <= c.core_rounds) invalid("max_sub_blocks", "must exceed core_rounds");
  if (c.value_rounds <= 0) invalid("value_rounds", "must be positive");
  if (c.sv_permutations == 0) invalid("sv_permutations", "must be positive");
  if (std::isnan(c.truncation_tol) || c.truncation_tol < 0.0) {
    invalid("truncation_tol", "must be non-negative");
  }
  positive_real(c.compute_mean, "compute_mean");
  nonneg_real(c.compute_std, "compute_std");
  if (c.partnership_threshold < 2) invalid("partnership_threshold", "must be at least 2");
  if (c.partnership_cap < c.partnership_threshold) {
    invalid("partnership_cap", "must not be below partnership_threshold");
  }
  if (c.challenge_subsets == 0) invalid("challenge_subsets", "must be positive");
  if (c.challenge_subset_size == 0 || c.challenge_subset_size > c.samples_per_miner) {
    invalid("challenge_subset_size", "must lie in [1, samples_per_miner]");
  }
  if (c.synth_classes < 2) invalid("synth_classes", "must be at least 2");
  if (c.synth_dim < static_cast<std::uint32_t>(c.synth_classes)) {
    invalid("synth_dim", "must be at least synth_classes");
  }
  if (c.synth_per_class == 0) invalid("synth_per_class", "must be positive");
  nonneg_real(c.synth_separation, "synth_separation");
  if (!(c.holdout_fraction > 0.0 && c.holdout_fraction < 1.0)) {
    invalid("holdout_fraction", "must lie in (0, 1)");
  }
  if (c.idx_images.empty() != c.idx_labels.empty()) {
    invalid(c.idx_images.empty() ? "idx_images" : "idx_labels",
            "idx_images and idx_labels go together");
  }
  for (const auto& [a, b] : c.hidden_edges) {
    if (a >= c.miner_count || b >= c.miner_count || a == b) {
      invalid("hidden_edges", "edge (" + std::to_string(a) + ", " + std::to_string(b) +
                                  ") is not a pair of distinct miners");
    }
  }
  if (c.report_estimators.empty()) invalid("report_estimators", "must not be empty");
  const bool wants_exact =
      c.sv_estimator == Estimator::kExact ||
      std::find(c.report_estimators.begin(), c.report_estimators.end(), Estimator::kExact) !=
          c.report_estimators.end();
  if (wants_exact && c.pool_size_cap > 10) {
    invalid("pool_size_cap", "EXACT valuation needs pools of at most 10 members");
  }
  if (!c.previous_block_head.empty()) {
    try {
      (void)digest_from_hex(c.previous_block_head);
    } catch (const Error&) {
      invalid("previous_block_head", "expected 64 hex digits");
    }
  }
}

nlohmann::json to_json(const ScenarioConfig& c) {
  nlohmann::json j;
  j["miner_count"] = c.miner_count;
  j["samples_per_miner"] = c.samples_per_miner;
  j["sub_block_time"] = c.sub_block_time;
  j["core_pool_threshold"] = c.core_pool_threshold;
  j["pool_size_cap"] = c.pool_size_cap;
  j["audits_min"] = c.audits_min;
  j["challenges_min"] = c.challenges_min;
  j["local_epochs"] = c.local_epochs;
  j["learning_rate"] = c.learning_rate;
  j["rt_mean"] = c.rt_mean;
  j["rt_std"] = c.rt_std;
  j["master_seed"] = c.master_seed;
  j["sv_estimator"] = to_string(c.sv_estimator);
  j["reservation_order"] = to_string(c.reservation_order);
  j["qualification_floor"] = c.qualification_floor;
  j["core_rounds"] = c.core_rounds;
  j["max_sub_blocks"] = c.max_sub_blocks;
  j["value_rounds"] = c.value_rounds;
  j["sv_permutations"] = c.sv_permutations;
  j["truncation_tol"] = c.truncation_tol;
  j["compute_mean"] = c.compute_mean;
  j["compute_std"] = c.compute_std;
  j["partnership_threshold"] = c.partnership_threshold;
  j["partnership_cap"] = c.partnership_cap;
  j["challenge_issuers"] = c.challenge_issuers;
  j["challenge_subsets"] = c.challenge_subsets;
  j["challenge_subset_size"] = c.challenge_subset_size;
  j["synth_classes"] = c.synth_classes;
  j["synth_dim"] = c.synth_dim;
  j["synth_per_class"] = c.synth_per_class;
  j["synth_separation"] = c.synth_separation;
  j["holdout_fraction"] = c.holdout_fraction;
  j["hidden_units"] = c.hidden_units;
  j["idx_images"] = c.idx_images;
  j["idx_labels"] = c.idx_labels;
  j["response_matrix_csv"] = c.response_matrix_csv;
  j["previous_block_head"] = c.previous_block_head;
  auto edges = nlohmann::json::array();
  for (const auto& [a, b] : c.hidden_edges) edges.push_back({a, b});
  j["hidden_edges"] = edges;
  auto ests = nlohmann::json::array();
  for (auto e : c.report_estimators) ests.push_back(to_string(e));
  j["report_estimators"] = ests;
  return j;
}

ScenarioConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kConfigInvalid, "config must be an object");
  ScenarioConfig c;
  const auto& table = setters();
  for (const auto& [key, value] : j.items()) {
    auto it = table.find(key);
    if (it == table.end()) invalid(key, "unknown field");
    it->second(c, value);
  }
  return c;
}

nlohmann::json parse_flat_toml(std::string_view text) { return TomlReader(text).document(); }

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();

  nlohmann::json j;
  if (path.extension() == ".json") {
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::kConfigInvalid, std::string("JSON: ") + e.what());
    }
  } else {
    j = parse_flat_toml(text);
  }
  ScenarioConfig c = config_from_json(j);
  c.base_dir = path.parent_path();
  validate(c);
  return c;
}

}  // namespace poflsc
