#ifndef CRMLTR_TOOLS_CLI_H_
#define CRMLTR_TOOLS_CLI_H_

#include <iosfwd>
#include <string>
#include <vector>

namespace crmltr::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kInvalid = 1;
inline constexpr int kIoFailure = 2;

// Environment variable naming the directory under which run directories are
// created when --out is not given. Defaults to "runs".
inline constexpr const char* kRunRootVariable = "CRMLTR_RUN_ROOT";

// Runs one subcommand. args[0] is the program name. Messages go to out/err.
int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);
int run(const std::vector<std::string>& args);

}  // namespace crmltr::cli

#endif  // CRMLTR_TOOLS_CLI_H_
