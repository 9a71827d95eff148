#include <iostream>

#include "multiverse/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return multiverse::run_cli(args, std::cout, std::cerr);
}
