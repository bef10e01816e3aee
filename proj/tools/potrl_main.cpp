#include <iostream>

#include "potrl/harness.hpp"

int main(int argc, char** argv) {
  return potrl::RunCli(argc, argv, std::cout, std::cerr);
}
