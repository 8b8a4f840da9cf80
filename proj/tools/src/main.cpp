#include <iostream>

#include "mtdeblur_tools/cli.hpp"

int main(int argc, char** argv) { return mtdeblur::cli::run(argc, argv, std::cout, std::cerr); }
