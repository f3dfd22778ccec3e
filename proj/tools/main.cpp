#include <iostream>

#include "eivlr/cli.hpp"

int main(int argc, char** argv) { return eivlr::run_cli(argc, argv, std::cout, std::cerr); }
