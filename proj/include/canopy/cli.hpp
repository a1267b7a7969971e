#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace canopy::cli {

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kUsage = 2,
    kParse = 3,
    kSchema = 4,
    kDegenerate = 5,
    kIo = 6,
};

/// Runs one command. `args` excludes the program name; the first element is the
/// command (tree, forest, importance, select, partition, blb, predict).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// key=value lines ('#' comments, blank lines ignored) as "--key value" tokens.
std::vector<std::string> config_tokens(const std::string& text);

}  // namespace canopy::cli
