#include <iostream>

#include "taegcn/cli.hpp"

int main(int argc, char** argv) {
  return taegcn::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
