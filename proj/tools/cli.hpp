#pragma once

// Operator entry point. `run_cli` is the whole program minus process exit, so
// tests can drive commands in-process.

#include <iosfwd>
#include <string>
#include <vector>

namespace rcache::cli {

// Returns the exit code. Fatal failures print one JSON object
// {"error": kind, "message": ...} to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rcache::cli
