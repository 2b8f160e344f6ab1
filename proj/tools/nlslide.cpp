#include <iostream>

#include "nlslide/cli.hpp"

int main(int argc, char** argv) { return nlslide::run_cli(argc, argv, std::cout, std::cerr); }
