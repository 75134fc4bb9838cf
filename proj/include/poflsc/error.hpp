#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace poflsc {

enum class ErrorCode {
  kConfigInvalid,
  kNoPoolFormed,
  kBadParams,
  kUnknownMiner,
  kBadMagic,
  kCountMismatch,
  kTruncatedFile,
  kDatasetTooSmall,
  kDimensionMismatch,
  kEmptyRound,
  kStaleNegative,
  kNoContributors,
  kTooManyMembers,
  kInvalidTx,
  kNoCandidate,
  kPartnershipUnknownPool,
  kAlreadyIssued,
  kSubsetTooLarge,
  kNoModel,
  kMissingSeeds,
  kParse,
  kIo,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace poflsc
