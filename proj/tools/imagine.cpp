#include <iostream>

#include "imagine/app/cli.hpp"

int main(int argc, char** argv) {
  return imagine::app::run_cli(argc, argv, std::cin, std::cout, std::cerr);
}
