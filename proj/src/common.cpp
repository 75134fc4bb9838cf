#include <cstdlib>
#include <string>
#include <thread>

#include "poflsc/error.hpp"
#include "poflsc/parallel.hpp"
#include "poflsc/types.hpp"

namespace poflsc {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::kTrainer: return "TRAINER";
    case Role::kHost: return "HOST";
    case Role::kProxy: return "PROXY";
    case Role::kDataContributor: return "DATA_CONTRIBUTOR";
    case Role::kChallenger: return "CHALLENGER";
    case Role::kAuditor: return "AUDITOR";
  }
  return "UNKNOWN";
}

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::kInitial: return "INITIAL";
    case Phase::kCore: return "CORE";
    case Phase::kSecondary: return "SECONDARY";
    case Phase::kVerification: return "VERIFICATION";
  }
  return "UNKNOWN";
}

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfigInvalid: return "CONFIG_INVALID";
    case ErrorCode::kNoPoolFormed: return "NO_POOL_FORMED";
    case ErrorCode::kBadParams: return "BAD_PARAMS";
    case ErrorCode::kUnknownMiner: return "UNKNOWN_MINER";
    case ErrorCode::kBadMagic: return "BAD_MAGIC";
    case ErrorCode::kCountMismatch: return "COUNT_MISMATCH";
    case ErrorCode::kTruncatedFile: return "TRUNCATED_FILE";
    case ErrorCode::kDatasetTooSmall: return "DATASET_TOO_SMALL";
    case ErrorCode::kDimensionMismatch: return "DIMENSION_MISMATCH";
    case ErrorCode::kEmptyRound: return "EMPTY_ROUND";
    case ErrorCode::kStaleNegative: return "STALE_NEGATIVE";
    case ErrorCode::kNoContributors: return "NO_CONTRIBUTORS";
    case ErrorCode::kTooManyMembers: return "TOO_MANY_MEMBERS";
    case ErrorCode::kInvalidTx: return "INVALID_TX";
    case ErrorCode::kNoCandidate: return "NO_CANDIDATE";
    case ErrorCode::kPartnershipUnknownPool: return "PARTNERSHIP_UNKNOWN_POOL";
    case ErrorCode::kAlreadyIssued: return "ALREADY_ISSUED";
    case ErrorCode::kSubsetTooLarge: return "SUBSET_TOO_LARGE";
    case ErrorCode::kNoModel: return "NO_MODEL";
    case ErrorCode::kMissingSeeds: return "MISSING_SEEDS";
    case ErrorCode::kParse: return "PARSE_ERROR";
    case ErrorCode::kIo: return "IO_ERROR";
  }
  return "UNKNOWN";
}

std::size_t worker_count() {
  if (const char* env = std::getenv("POFLSC_THREADS"); env != nullptr && *env != '\0') {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      // fall through to the machine default
    }
  }
  const auto hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

}  // namespace poflsc
