#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace asmflow {

enum class Errc {
  AngleNearPi,
  DegenerateCovariance,
  LengthMismatch,
  TauOutOfRange,
  ZeroDirection,
  SelectionRuleViolation,
  SpecMismatch,
  ShapeMismatch,
  DisconnectedGraph,
  EmptyNeighborhood,
  PieceTooSmall,
  NaNLoss,
  DegenerateCut,
  ParseError,
  InvalidConfig,
  IoError,
};

std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

inline std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::AngleNearPi: return "AngleNearPi";
    case Errc::DegenerateCovariance: return "DegenerateCovariance";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::TauOutOfRange: return "TauOutOfRange";
    case Errc::ZeroDirection: return "ZeroDirection";
    case Errc::SelectionRuleViolation: return "SelectionRuleViolation";
    case Errc::SpecMismatch: return "SpecMismatch";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::DisconnectedGraph: return "DisconnectedGraph";
    case Errc::EmptyNeighborhood: return "EmptyNeighborhood";
    case Errc::PieceTooSmall: return "PieceTooSmall";
    case Errc::NaNLoss: return "NaNLoss";
    case Errc::DegenerateCut: return "DegenerateCut";
    case Errc::ParseError: return "ParseError";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace asmflow
