#include <iostream>

#include "imedbot/cli.hpp"

int main(int argc, char** argv) {
  return imedbot::cli::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
}
