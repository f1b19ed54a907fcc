#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tg {

/// Command-line front end. `args` are the words after the program name, in
/// order. Returns the process exit code: 0 on success, 1 when the requested
/// check fails (verification errors, a failing replay, a flagged endpoint),
/// 2 on usage or input errors.
int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err);

} // namespace tg
