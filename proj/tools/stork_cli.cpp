#include <iostream>

#include "stork/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return stork::dispatch(args, std::cout, std::cerr);
}
