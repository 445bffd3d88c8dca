// Apache License, Version 2.0, refer to LICENSE.txt

#include "tvcluster/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
  return tvc::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
