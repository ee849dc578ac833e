#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace exprdit {

// Subcommands: synth, train, sample, eval, curate, config.
// Returns 0 on success, 2 on usage errors and 1 when an operation fails; the
// failure's message is written to `err` as a single line.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace exprdit
