#include <iostream>

#include "pidnet/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return pidnet::run_cli(args, std::cout, std::cerr);
}
