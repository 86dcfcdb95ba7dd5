#include <iostream>
#include <string>
#include <vector>

#include "udss/cli/dispatch.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return udss::cli::dispatch(args, std::cout, std::cerr);
}
