#include <iostream>

#include "gridloop/cli.hpp"

int main(int argc, char** argv) { return gridloop::dispatch(argc, argv, std::cout, std::cerr); }
