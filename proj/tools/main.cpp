#include <iostream>

#include "bitturbo/cli.hpp"

int main(int argc, char** argv) { return bitturbo::run_cli(argc, argv, std::cout, std::cerr); }
