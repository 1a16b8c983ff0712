#include <iostream>
#include <string>
#include <vector>

#include "kbsql/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return kbsql::run_cli(args, std::cout, std::cerr);
}
