#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace multiverse {

/// Entry point of the `multiverse` tool without the program name:
/// compile, run, merge and serve. Errors are reported on `err` as lines
/// starting with `error[<code>]:`; the return value is the exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace multiverse
