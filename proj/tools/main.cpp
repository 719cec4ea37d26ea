#include <iostream>

#include "nqac/cli.hpp"

int main(int argc, char** argv) {
  return nqac::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
