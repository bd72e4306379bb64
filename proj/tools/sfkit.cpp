#include <iostream>

#include "sfk/cli/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return sfk::cli::run(args, std::cout, std::cerr);
}
