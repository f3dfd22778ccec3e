#pragma once

#include <iosfwd>
#include <optional>
#include <string>

#include "eivlr/elliptical.hpp"

namespace eivlr {

/// Exit codes of the command-line front end.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitInput = 2,
  kExitFit = 3,
  kExitNumeric = 4,
  kExitInternal = 5,
};

/// Family from --family / --nu / --lambda style values; the shape is
/// required for student_t and power_exponential.
EllipticalFamily family_from_flags(const std::string& family, std::optional<double> nu,
                                   std::optional<double> lambda, int dim);

/// Runs `eivlr <subcommand> ...`. Results go to `out` (or the --out files);
/// every failure is reported on `err` as one line "error: <code>: <message>".
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace eivlr
