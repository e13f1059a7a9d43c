#include <iostream>

#include "trafficguard/cli.hpp"

int main(int argc, char** argv) { return trafficguard::cli::run(argc, argv, std::cout, std::cerr); }
