#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace trustfl {

enum class Errc {
  InvalidArgument,
  InvalidEvidence,
  DimensionMismatch,
  NonFinite,
  EmptyNeighborhood,
  ZeroMass,
  WeightSumViolation,
  DegenerateWeights,
  InvalidTopology,
  InvalidConfig,
  Io,
};

inline std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::InvalidEvidence: return "InvalidEvidence";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::NonFinite: return "NonFinite";
    case Errc::EmptyNeighborhood: return "EmptyNeighborhood";
    case Errc::ZeroMass: return "ZeroMass";
    case Errc::WeightSumViolation: return "WeightSumViolation";
    case Errc::DegenerateWeights: return "DegenerateWeights";
    case Errc::InvalidTopology: return "InvalidTopology";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (and tests) can branch on the kind without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail),
        code_(code),
        detail_(detail) {}

  Errc code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

  /// Same error with a location prefix such as "round 3, agent 7".
  Error with_context(const std::string& where) const { return Error(code_, where + ": " + detail_); }

 private:
  Errc code_;
  std::string detail_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool ok, Errc code, const std::string& what) {
  if (!ok) fail(code, what);
}

}  // namespace trustfl
