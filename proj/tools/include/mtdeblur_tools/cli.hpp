#pragma once

#include <ostream>

namespace mtdeblur::cli {

/// Entry point of the mtdeblur command line tool. Returns the process exit
/// code; diagnostics go to `err`, reports and progress to `out`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mtdeblur::cli
