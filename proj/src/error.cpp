#include "dnaadv/error.hpp"

namespace dnaadv {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidSymbol: return "InvalidSymbol";
    case ErrorKind::SequenceTooShort: return "SequenceTooShort";
    case ErrorKind::NotInvertible: return "NotInvertible";
    case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::ConnectFailed: return "ConnectFailed";
    case ErrorKind::ProtocolError: return "ProtocolError";
    case ErrorKind::Timeout: return "Timeout";
    case ErrorKind::NoGradientCapability: return "NoGradientCapability";
    case ErrorKind::NoFeatureView: return "NoFeatureView";
    case ErrorKind::TooManyFeaturesForExact: return "TooManyFeaturesForExact";
    case ErrorKind::EmptyTargetPool: return "EmptyTargetPool";
    case ErrorKind::RepairFailed: return "RepairFailed";
    case ErrorKind::SourceEmpty: return "SourceEmpty";
    case ErrorKind::ZeroCleanAccuracy: return "ZeroCleanAccuracy";
    case ErrorKind::ZeroDefAccuracy: return "ZeroDefAccuracy";
    case ErrorKind::MissingCell: return "MissingCell";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::InvalidRecord: return "InvalidRecord";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::NotFound: return "NotFound";
    case ErrorKind::MixedTokenizers: return "MixedTokenizers";
    case ErrorKind::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorKind::InvalidMotif: return "InvalidMotif";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::UnknownKey: return "UnknownKey";
  }
  return "Unknown";
}

}  // namespace dnaadv
