#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) { return hjflow::cli::run(argc, argv, std::cout, std::cerr); }
