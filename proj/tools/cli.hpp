#pragma once

#include <string>
#include <vector>

namespace glamap::cli {

/// Entry point for the glamap command set. Returns the process exit code:
/// 0 success, 1 validation/runtime failure (one-line diagnostic on stderr),
/// 2 usage errors.
int run_cli(const std::vector<std::string>& args);

}  // namespace glamap::cli
