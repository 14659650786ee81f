// SPDX-License-Identifier: Apache-2.0
//
// televit command-line front end. Exit codes: 0 success, 2 configuration or
// usage error, 3 data error, 1 anything else (e.g. training divergence).
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace televit::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;

/// Parses and runs one command. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace televit::cli
