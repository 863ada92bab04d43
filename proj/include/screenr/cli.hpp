#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace screenr::cli {

enum ExitCode : int {
    kSuccess = 0,
    kUsageError = 1,
    kCompletedWithFailures = 2,
};

struct Streams {
    std::istream& in;
    std::ostream& out;
    std::ostream& err;
};

/// Runs the `screenr` command line. args[0] is the program name. Log output goes to io.err.
int run(const std::vector<std::string>& args, Streams io);

}  // namespace screenr::cli
