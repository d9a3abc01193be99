#include <iostream>

#include "wcgen/cli.hpp"

int main(int argc, char** argv) {
  const wcgen::cli::Context ctx{std::cout, std::cerr, {}};
  return wcgen::cli::run(argc, argv, ctx);
}
