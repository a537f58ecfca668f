#pragma once
// Command-line surface: demo, bench, oracle, train and replay subcommands.

#include <ostream>
#include <string>
#include <vector>

namespace mve {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitDivergence = 3;
inline constexpr int kExitChecksFailed = 4;  // oracle suite reported a failing check

// `args` excludes the program name. Every subcommand writes its outputs and a
// manifest.json into its run directory (--out).
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int cli_main(int argc, char** argv);

}  // namespace mve
