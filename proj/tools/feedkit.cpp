#include <iostream>
#include <string>
#include <vector>

#include "feed/cli.hpp"
#include "feed/runtime.hpp"

int main(int argc, char** argv) {
  feed::tune_allocator();
  const std::vector<std::string> args(argv + 1, argv + argc);
  return feed::run_cli(args, std::cout, std::cerr);
}
