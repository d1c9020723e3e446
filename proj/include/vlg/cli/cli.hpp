// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iostream>
#include <string>
#include <vector>

namespace vlg::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;  // usage, contract, data, config errors
inline constexpr int kNumeric = 2;  // non-finite values, failed gradient check

// Runs one command line (without the program name). Reports go to `out` or
// to --out; diagnostics go to `err`; the generate REPL reads `in`.
int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr,
        std::istream& in = std::cin);

}  // namespace vlg::cli
