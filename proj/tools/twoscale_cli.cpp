#include <iostream>

#include "twoscale/cli.hpp"

int main(int argc, char** argv) {
  return twoscale::cli::main_entry(argc, argv, std::cout, std::cerr);
}
