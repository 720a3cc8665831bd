// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "commands/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return visnet::cli::run(args, std::cout, std::cerr);
}
