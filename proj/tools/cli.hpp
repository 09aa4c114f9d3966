#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace metatopic {

/// Runs the command line `args` (without the program name). Normal output goes
/// to `out`; failures print one "error: ..." line to `err`. Returns the exit
/// code: 0 on success, 1 on runtime failure, 2 on usage errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace metatopic
