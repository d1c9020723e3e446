// SPDX-License-Identifier: Apache-2.0
#include <string>
#include <vector>

#include "vlg/cli/cli.hpp"

int main(int argc, char** argv) {
  return vlg::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
