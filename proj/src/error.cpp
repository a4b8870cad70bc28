#include "segrun/error.hpp"

namespace segrun {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::IoError: return "IoError";
    case Errc::UnsupportedDatatype: return "UnsupportedDatatype";
    case Errc::CorruptHeader: return "CorruptHeader";
    case Errc::DimensionError: return "DimensionError";
    case Errc::NanInData: return "NanInData";
    case Errc::NonBinaryMaskAsUint8: return "NonBinaryMaskAsUint8";
    case Errc::ExternalToolMissing: return "ExternalToolMissing";
    case Errc::ExternalToolFailed: return "ExternalToolFailed";
    case Errc::CacheCorruption: return "CacheCorruption";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::DuplicateId: return "DuplicateId";
    case Errc::ParseError: return "ParseError";
    case Errc::NotFound: return "NotFound";
    case Errc::ChecksumMismatch: return "ChecksumMismatch";
    case Errc::ManifestMismatch: return "ManifestMismatch";
    case Errc::BackendInitFailed: return "BackendInitFailed";
    case Errc::InferenceFailed: return "InferenceFailed";
    case Errc::UnsupportedOperator: return "UnsupportedOperator";
    case Errc::ThresholdOutOfRange: return "ThresholdOutOfRange";
    case Errc::MissingInverseRecord: return "MissingInverseRecord";
    case Errc::MniTransformMissing: return "MniTransformMissing";
    case Errc::PortInUse: return "PortInUse";
    case Errc::Cancelled: return "Cancelled";
  }
  return "Unknown";
}

bool is_validation_error(Errc code) {
  switch (code) {
    case Errc::InvalidArgument:
    case Errc::NotFound:
    case Errc::ShapeMismatch:
    case Errc::DuplicateId:
    case Errc::ParseError:
    case Errc::ChecksumMismatch:
    case Errc::ManifestMismatch:
    case Errc::ThresholdOutOfRange:
    case Errc::UnsupportedOperator:
      return true;
    default:
      return false;
  }
}

}  // namespace segrun
