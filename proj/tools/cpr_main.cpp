#include <iostream>

#include "cpr/cli.hpp"

int main(int argc, char** argv) { return cpr::run_cli(argc, argv, std::cout, std::cerr); }
