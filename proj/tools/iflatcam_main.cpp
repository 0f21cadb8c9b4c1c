#include <iostream>

#include "iflatcam/cli.hpp"

int main(int argc, char** argv) { return iflatcam::cli::run(argc, argv, std::cout, std::cerr); }
