#pragma once

#include <string>
#include <vector>

namespace affinv::cli {

/// Runs one subcommand. Returns 0 on success, 1 on usage/validation errors,
/// 2 when a solver fails to converge.
int run(int argc, char** argv);
int run(const std::vector<std::string>& args);

}  // namespace affinv::cli
