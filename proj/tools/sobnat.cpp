#include <iostream>

#include "sobnat/cli.hpp"

int main(int argc, char** argv) { return sobnat::run_cli(argc, argv, std::cout, std::cerr); }
