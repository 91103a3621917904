#include <iostream>

#include "ctxforge/cli.hpp"

int main(int argc, char** argv) { return ctxforge::run_cli(argc, argv, std::cout, std::cerr); }
