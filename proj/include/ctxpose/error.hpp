#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ctxpose {

enum class ErrorCode {
  InvalidEdge,
  CyclicGraph,
  DisconnectedGraph,
  EmptyDataset,
  IndexOutOfRange,
  NonPositiveSigma,
  UnnormalizedHeatmap,
  SearchSpaceTooLarge,
  ShapeMismatch,
  UnknownUpdateFunction,
  DegenerateNormalizer,
  TapeConsumed,
  GtOutsideGrid,
  DegenerateConfiguration,
  ZeroLengthLimb,
  BoxTooSmall,
  InvalidConfig,
  DataMismatch,
  Io,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

}  // namespace ctxpose
