#include <iostream>

#include "csfusion/cli.hpp"

int main(int argc, char** argv) {
  return csfusion::cli::dispatch(argc, argv, std::cout, std::cerr);
}
