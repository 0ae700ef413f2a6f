#include <iostream>

#include "saeboost/cli.hpp"

int main(int argc, char** argv) {
  return sae::run_cli(argc, argv, std::cout, std::cerr);
}
