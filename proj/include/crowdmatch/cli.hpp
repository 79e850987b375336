#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace crowdmatch {

/// Runs one command line (without the program name). Exit codes: 0 ok,
/// 1 usage, 2 data or provider failure, 3 network failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            std::istream& in);

}  // namespace crowdmatch
