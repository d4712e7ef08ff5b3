#include <iostream>
#include <string>
#include <vector>

#include "polyattn/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return polyattn::run_cli(args, std::cout, std::cerr);
}
