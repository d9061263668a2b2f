#include "ctxpose/error.hpp"

namespace ctxpose {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidEdge: return "InvalidEdge";
    case ErrorCode::CyclicGraph: return "CyclicGraph";
    case ErrorCode::DisconnectedGraph: return "DisconnectedGraph";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::NonPositiveSigma: return "NonPositiveSigma";
    case ErrorCode::UnnormalizedHeatmap: return "UnnormalizedHeatmap";
    case ErrorCode::SearchSpaceTooLarge: return "SearchSpaceTooLarge";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::UnknownUpdateFunction: return "UnknownUpdateFunction";
    case ErrorCode::DegenerateNormalizer: return "DegenerateNormalizer";
    case ErrorCode::TapeConsumed: return "TapeConsumed";
    case ErrorCode::GtOutsideGrid: return "GtOutsideGrid";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::ZeroLengthLimb: return "ZeroLengthLimb";
    case ErrorCode::BoxTooSmall: return "BoxTooSmall";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::DataMismatch: return "DataMismatch";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace ctxpose
