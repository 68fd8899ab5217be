#include <iostream>

#include "ditcod/cli.hpp"

int main(int argc, char** argv) { return ditcod::run_cli(argc, argv, std::cout, std::cerr); }
