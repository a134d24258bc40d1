#pragma once

#include "cat/clusters/mechanics.hpp"

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace cat::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kConfigError = 2, kIoError = 3 };

/// Runs one command line (without the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Table of per-component logit widths for every variant, in CAT and
/// depth-2 form, for a width x height level.
std::string logit_table(int width, int height,
                        std::span<const clusters::Variant> variants = clusters::kAllVariants);

}  // namespace cat::cli
