#include <iostream>
#include <string>
#include <vector>

#include "forestdiff/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return forestdiff::cli::run(args, std::cout, std::cerr);
}
