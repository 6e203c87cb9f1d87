#include <iostream>
#include <string>
#include <vector>

#include "pd4ml/cli.hpp"

int main(int argc, char** argv) {
  pd4ml::tune_allocator();
  const std::vector<std::string> args(argv + 1, argv + argc);
  return pd4ml::run_command(args, std::cout, std::cerr);
}
