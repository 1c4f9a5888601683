#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace msfcn {

enum class Errc {
  io,
  decode,
  invalid_config,
  insufficient_patients,
  spec_out_of_bounds,
  slide_smaller_than_patch,
  empty_training_set,
  shape_mismatch,
  missing_tile,
  duplicate_tile,
  non_square_patch,
  already_balanced,
  target_too_large,
  checkpoint_mismatch,
  empty_matrix,
  degenerate_table,
  no_epidermis_surface,
  no_tumour,
  numeric,
};

std::string_view errc_name(Errc code) noexcept;

// Coarse error classes; the CLI maps them onto exit codes 2/3/4.
enum class ErrorClass { config = 2, data = 3, numeric = 4 };

ErrorClass error_class(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace msfcn
