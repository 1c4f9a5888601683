#include "msfcn/error.hpp"

namespace msfcn {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::io: return "IoError";
    case Errc::decode: return "DecodeError";
    case Errc::invalid_config: return "InvalidConfig";
    case Errc::insufficient_patients: return "InsufficientPatients";
    case Errc::spec_out_of_bounds: return "SpecOutOfBounds";
    case Errc::slide_smaller_than_patch: return "SlideSmallerThanPatch";
    case Errc::empty_training_set: return "EmptyTrainingSet";
    case Errc::shape_mismatch: return "ShapeMismatch";
    case Errc::missing_tile: return "MissingTile";
    case Errc::duplicate_tile: return "DuplicateTile";
    case Errc::non_square_patch: return "NonSquarePatch";
    case Errc::already_balanced: return "AlreadyBalanced";
    case Errc::target_too_large: return "TargetTooLarge";
    case Errc::checkpoint_mismatch: return "CheckpointMismatch";
    case Errc::empty_matrix: return "EmptyMatrix";
    case Errc::degenerate_table: return "DegenerateTable";
    case Errc::no_epidermis_surface: return "NoEpidermisSurface";
    case Errc::no_tumour: return "NoTumour";
    case Errc::numeric: return "NumericError";
  }
  return "Unknown";
}

ErrorClass error_class(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_config:
    case Errc::checkpoint_mismatch:
      return ErrorClass::config;
    case Errc::numeric:
      return ErrorClass::numeric;
    default:
      return ErrorClass::data;
  }
}

Error::Error(Errc code, const std::string& what)
    : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

}  // namespace msfcn
