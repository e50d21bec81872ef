#include <iostream>

#include "rau/cli.hpp"

int main(int argc, char** argv) { return rau::run_cli(argc, argv, std::cout, std::cerr); }
