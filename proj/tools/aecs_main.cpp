#include <iostream>
#include <string>
#include <vector>

#include "aecs/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return aecs::cli::run_command(args, std::cout, std::cerr);
}
