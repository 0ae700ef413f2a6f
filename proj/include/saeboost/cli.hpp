#pragma once

#include <iosfwd>

namespace sae {

// Full command-line entry point (fit / predict / mse / simulate / tune).
// Returns the process exit code; errors are reported on `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sae
