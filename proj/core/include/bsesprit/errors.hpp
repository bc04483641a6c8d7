// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace bsesprit {

enum class ErrorCode {
  invalid_input,
  numeric_failure,
  shape_mismatch,
  needs_hybrid,
  insufficient_beams,
  singular_transform,
  degenerate_geometry,
  out_of_domain,
  underdetermined_pilot,
  invalid_smoothing,
  pairing_failure,
  decomposition_failure,
  cannot_lift,
  ill_posed_scenario,
  singular_parameterization,
  config_error,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what, int iterations = -1)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code),
        iterations_(iterations) {}

  ErrorCode code() const noexcept { return code_; }
  // Iteration count for numeric failures, -1 otherwise.
  int iterations() const noexcept { return iterations_; }

 private:
  ErrorCode code_;
  int iterations_;
};

}  // namespace bsesprit
