#pragma once

#include <cstdint>
#include <iosfwd>
#include <set>
#include <utility>
#include <vector>

#include "poflsc/types.hpp"

namespace poflsc {

// Symmetric pairwise response times with a zero diagonal.
class ResponseTimeMatrix {
 public:
  ResponseTimeMatrix() = default;
  explicit ResponseTimeMatrix(std::size_t n) : n_(n), rt_(n * n, 0.0) {}

  // Validates symmetry, zero diagonal and positive off-diagonal entries.
  static ResponseTimeMatrix from_rows(const std::vector<std::vector<Millis>>& rows);

  std::size_t size() const { return n_; }
  Millis at(MinerId i, MinerId j) const { return rt_[i.value * n_ + j.value]; }
  // Writes both (i, j) and (j, i).
  void set(MinerId i, MinerId j, Millis v);

  bool operator==(const ResponseTimeMatrix&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<Millis> rt_;
};

// Upper triangle i.i.d. Normal(mean, std) truncated below at 1 ms, mirrored.
ResponseTimeMatrix gen_response_matrix(std::size_t n, Millis mean, Millis std, std::uint64_t seed);

// Row-major CSV with a header row of miner ids.
void write_matrix_csv(const ResponseTimeMatrix& m, std::ostream& out);
ResponseTimeMatrix read_matrix_csv(std::istream& in);

struct MinerProfile {
  MinerId id;
  double reliability = 1.0;
  std::set<Role> roles;
  Millis epoch_time = 0.0;  // measured time of one local epoch
};

std::vector<MinerProfile> gen_profiles(std::size_t n, Millis epoch_mean, Millis epoch_std,
                                       std::uint64_t seed);

class Topology {
 public:
  Topology(ResponseTimeMatrix rts, std::vector<MinerProfile> profiles, int local_epochs,
           const std::vector<std::pair<MinerId, MinerId>>& hidden_edges = {});

  std::size_t size() const { return rts_.size(); }
  const ResponseTimeMatrix& rts() const { return rts_; }
  const std::vector<MinerProfile>& profiles() const { return profiles_; }

  // Throws UNKNOWN_MINER for ids outside the population.
  std::vector<MinerId> visible_miners(MinerId id) const;
  bool visible(MinerId a, MinerId b) const;

  // Time for `to` to train its local epochs and deliver the result to `from`.
  Millis response_time(MinerId from, MinerId to) const;
  Millis training_time(MinerId id) const;

 private:
  void check(MinerId id) const;

  ResponseTimeMatrix rts_;
  std::vector<MinerProfile> profiles_;
  int local_epochs_;
  std::vector<bool> visible_;
};

}  // namespace poflsc
