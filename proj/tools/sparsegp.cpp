#include "sparsegp/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return sparsegp::run_cli(argc, argv, std::cout, std::cerr); }
