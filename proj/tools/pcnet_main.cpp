#include <iostream>

#include "pcnet/cli.hpp"

int main(int argc, char** argv) { return pcnet::run_cli(argc, argv, std::cout, std::cerr); }
