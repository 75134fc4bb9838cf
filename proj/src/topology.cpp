#include "poflsc/topology.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "poflsc/error.hpp"
#include "poflsc/rng.hpp"

namespace poflsc {

ResponseTimeMatrix ResponseTimeMatrix::from_rows(const std::vector<std::vector<Millis>>& rows) {
  const std::size_t n = rows.size();
  ResponseTimeMatrix m(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (rows[i].size() != n) throw Error(ErrorCode::kParse, "response matrix is not square");
    for (std::size_t j = 0; j < n; ++j) {
      const Millis v = rows[i][j];
      if (!std::isfinite(v)) throw Error(ErrorCode::kParse, "non-finite response time");
      if (i == j && v != 0.0) throw Error(ErrorCode::kParse, "non-zero diagonal");
      if (i != j && v <= 0.0) throw Error(ErrorCode::kParse, "non-positive response time");
      if (rows[j].size() == n && rows[j][i] != v) {
        throw Error(ErrorCode::kParse, "response matrix is not symmetric");
      }
      m.rt_[i * n + j] = v;
    }
  }
  return m;
}

void ResponseTimeMatrix::set(MinerId i, MinerId j, Millis v) {
  rt_[i.value * n_ + j.value] = v;
  rt_[j.value * n_ + i.value] = v;
}

ResponseTimeMatrix gen_response_matrix(std::size_t n, Millis mean, Millis std,
                                       std::uint64_t seed) {
  if (n == 0 || !(mean > 0.0) || !(std >= 0.0)) {
    throw Error(ErrorCode::kBadParams, "gen_response_matrix needs n >= 1, mean > 0, std >= 0");
  }
  ResponseTimeMatrix m(n);
  Rng rng(seed);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = i + 1; j < n; ++j) {
      m.set(MinerId{i}, MinerId{j}, std::max(1.0, rng.normal(mean, std)));
    }
  }
  return m;
}

void write_matrix_csv(const ResponseTimeMatrix& m, std::ostream& out) {
  const auto n = static_cast<std::uint32_t>(m.size());
  for (std::uint32_t j = 0; j < n; ++j) out << (j ? "," : "") << j;
  out << '\n';
  std::ostringstream cell;
  cell.precision(17);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < n; ++j) {
      cell.str("");
      cell << m.at(MinerId{i}, MinerId{j});
      out << (j ? "," : "") << cell.str();
    }
    out << '\n';
  }
}

ResponseTimeMatrix read_matrix_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kParse, "empty matrix csv");
  std::vector<std::vector<Millis>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<Millis> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw Error(ErrorCode::kParse, "bad matrix cell '" + cell + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  return ResponseTimeMatrix::from_rows(rows);
}

std::vector<MinerProfile> gen_profiles(std::size_t n, Millis epoch_mean, Millis epoch_std,
                                       std::uint64_t seed) {
  std::vector<MinerProfile> out;
  out.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, "epoch-time", i));
    MinerProfile p;
    p.id = MinerId{i};
    p.roles = {Role::kTrainer, Role::kDataContributor};
    p.epoch_time = epoch_mean > 0.0 ? std::max(0.1, rng.normal(epoch_mean, epoch_std)) : 0.0;
    out.push_back(std::move(p));
  }
  return out;
}

Topology::Topology(ResponseTimeMatrix rts, std::vector<MinerProfile> profiles, int local_epochs,
                   const std::vector<std::pair<MinerId, MinerId>>& hidden_edges)
    : rts_(std::move(rts)),
      profiles_(std::move(profiles)),
      local_epochs_(local_epochs),
      visible_(rts_.size() * rts_.size(), true) {
  if (profiles_.size() != rts_.size()) {
    throw Error(ErrorCode::kBadParams, "profile count does not match response matrix");
  }
  const auto n = rts_.size();
  for (std::size_t i = 0; i < n; ++i) visible_[i * n + i] = false;
  for (const auto& [a, b] : hidden_edges) {
    check(a);
    check(b);
    visible_[a.value * n + b.value] = false;
    visible_[b.value * n + a.value] = false;
  }
}

void Topology::check(MinerId id) const {
  if (id.value >= rts_.size()) {
    throw Error(ErrorCode::kUnknownMiner, "miner " + std::to_string(id.value));
  }
}

std::vector<MinerId> Topology::visible_miners(MinerId id) const {
  check(id);
  std::vector<MinerId> out;
  const auto n = rts_.size();
  for (std::uint32_t j = 0; j < n; ++j) {
    if (visible_[id.value * n + j]) out.push_back(MinerId{j});
  }
  return out;
}

bool Topology::visible(MinerId a, MinerId b) const {
  check(a);
  check(b);
  return visible_[a.value * rts_.size() + b.value];
}

Millis Topology::training_time(MinerId id) const {
  check(id);
  return profiles_[id.value].epoch_time * local_epochs_;
}

Millis Topology::response_time(MinerId from, MinerId to) const {
  return rts_.at(from, to) + training_time(to);
}

}  // namespace poflsc
