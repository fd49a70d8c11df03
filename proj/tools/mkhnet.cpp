#include <iostream>
#include <string>
#include <vector>

#include "mkh/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return mkh::run_cli(args, std::cout, std::cerr);
}
