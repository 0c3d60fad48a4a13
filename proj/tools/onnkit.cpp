#include <iostream>

#include "onnkit/commands.hpp"

int main(int argc, char** argv) {
  return onnkit::run_cli(argc, argv, std::cout, std::cerr);
}
