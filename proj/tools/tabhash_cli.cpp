#include <iostream>

#include "tabhash/cli.hpp"

int main(int argc, char** argv) { return tabhash::main_entry(argc, argv, std::cout, std::cerr); }
