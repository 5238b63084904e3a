#include <iostream>
#include <string>
#include <vector>

#include "car/cli.hpp"

int main(int argc, char** argv) {
  return car::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
