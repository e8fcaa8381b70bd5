#include <iostream>

#include "chronovec/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return chronovec::cli::run(args, std::cout, std::cerr);
}
