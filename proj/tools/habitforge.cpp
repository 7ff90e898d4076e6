#include <iostream>

#include "habitforge/cli.hpp"

int main(int argc, char** argv) { return habitforge::cli::run(argc, argv, std::cout, std::cerr); }
