#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace readmit {

// Runs the whole CLI against the given argument list (without argv[0]).
// Output streams are injectable so tests can capture them. Returns the
// process exit code: 0 success, 1 usage error, 2 data error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace readmit
