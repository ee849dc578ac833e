#include <iostream>

#include "exprdit/cli.hpp"

int main(int argc, char** argv) { return exprdit::run_cli(argc, argv, std::cout, std::cerr); }
