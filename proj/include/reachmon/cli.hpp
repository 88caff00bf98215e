#pragma once

#include <iosfwd>

namespace reachmon {

/// Entry point of the reachmon tool. Returns 0 on success, 1 on validation
/// and certificate errors (including bad flags), 2 on runtime errors.
int cli_main(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace reachmon
