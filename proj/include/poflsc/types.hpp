#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <string_view>

namespace poflsc {

template <typename Tag>
struct StrongId {
  std::uint32_t value = 0;

  constexpr StrongId() = default;
  constexpr explicit StrongId(std::uint32_t v) : value(v) {}

  constexpr auto operator<=>(const StrongId&) const = default;
};

struct MinerTag {};
struct SubchainTag {};

using MinerId = StrongId<MinerTag>;
using SubchainId = StrongId<SubchainTag>;

// Simulated milliseconds.
using Millis = double;

using Digest = std::array<std::uint8_t, 32>;

enum class Role : std::uint8_t {
  kTrainer = 0,
  kHost = 1,
  kProxy = 2,
  kDataContributor = 3,
  kChallenger = 4,
  kAuditor = 5,
};

enum class Phase : std::uint8_t {
  kInitial = 0,
  kCore = 1,
  kSecondary = 2,
  kVerification = 3,
};

std::string_view to_string(Role role);
std::string_view to_string(Phase phase);

}  // namespace poflsc

template <typename Tag>
struct std::hash<poflsc::StrongId<Tag>> {
  std::size_t operator()(const poflsc::StrongId<Tag>& id) const noexcept {
    return std::hash<std::uint32_t>{}(id.value);
  }
};
