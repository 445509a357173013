#include <iostream>

#include "jras_cli/app.hpp"

int main(int argc, char** argv) { return jras::cli::run_cli(argc, argv, std::cout, std::cerr); }
