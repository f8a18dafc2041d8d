#include "clockecho/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return clockecho::run_cli(argc, argv, std::cout, std::cerr); }
