#include <iostream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "gatta/kernels.hpp"

int main(int argc, char** argv) {
  gatta::kernels::configure_runtime();
  const std::vector<std::string> args(argv, argv + argc);
  return gatta::cli::run(args, std::cout, std::cerr);
}
