#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace pstrp {

/// Runs one `pstrp` invocation. args excludes the program name. Returns the
/// process exit status: 0 success, 1 runtime failure, 2 usage error or unknown
/// config key. Failures print one `pstrp: error[<code>]: <message>` line to err.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pstrp
