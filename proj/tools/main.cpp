#include <iostream>

#include "crowdmatch/cli.hpp"

int main(int argc, char** argv) {
  return crowdmatch::run_cli({argv + 1, argv + argc}, std::cout, std::cerr, std::cin);
}
