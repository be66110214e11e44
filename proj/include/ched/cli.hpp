#pragma once

#include <string>
#include <vector>

namespace ched::cli {

// Entry point behind main(); also callable from tests and bindings.
// Subcommands: preprocess | build-vocab | extract | train | generate |
// evaluate | chat. Returns the process exit status.
int run(const std::vector<std::string>& args);
int run(int argc, const char* const* argv);

}  // namespace ched::cli
