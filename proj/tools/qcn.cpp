#include <iostream>

#include "qcn/cli.hpp"

int main(int argc, char** argv) { return qcn::cli_main(argc, argv, std::cout, std::cerr); }
