#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace nubble {

/// Entry point of the `nubblematch` executable. `args` excludes the program
/// name. Returns 0 on success, 1 on I/O errors, 2 on argument or validation
/// errors. On success one canonical JSON summary line goes to `out`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nubble
