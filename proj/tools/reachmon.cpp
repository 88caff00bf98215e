#include <iostream>

#include "reachmon/cli.hpp"

int main(int argc, char** argv) { return reachmon::cli_main(argc, argv, std::cout, std::cerr); }
