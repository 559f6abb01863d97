#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "gatta/kernels.hpp"

int main(int argc, char** argv) {
  gatta::kernels::configure_runtime();
  doctest::Context context(argc, argv);
  return context.run();
}
