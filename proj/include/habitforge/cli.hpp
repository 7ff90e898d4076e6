#pragma once

#include <iosfwd>

namespace habitforge::cli {

/// Runs one subcommand. Returns 0 on success, 1 when a pipeline stage fails
/// and 2 for usage errors; errors are written to `err` as one JSON line.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace habitforge::cli
