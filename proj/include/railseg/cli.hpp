#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace railseg::cli {

/// Exit codes of the railseg tool.
enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kUsage = 2,
    kInvalid = 3,
    kMissingFiles = 4,
    kLocked = 5,
};

/// Runs one invocation; args exclude the program name. Results go to `out`,
/// errors to `err` as a single JSON object.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace railseg::cli
