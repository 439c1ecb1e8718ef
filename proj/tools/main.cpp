#include <iostream>

#include "lse/cli.hpp"

int main(int argc, char** argv) {
  return lse::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
