#pragma once

#include <iosfwd>

namespace cpr {

// Runs one `cpr` subcommand. Returns 0 on success, 1 on runtime errors (one
// line `error: <Code>: <detail>` on `err`) and 2 on usage errors.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cpr
