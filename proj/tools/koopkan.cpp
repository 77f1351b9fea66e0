#include <iostream>

#include "koopkan/cli.hpp"

int main(int argc, char** argv) {
  return koopkan::cli::run(argc, argv, std::cout, std::cerr);
}
