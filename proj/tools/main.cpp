#include <iostream>

#include "kanslu/cli/commands.hpp"

int main(int argc, char** argv) { return kanslu::cli::run_cli(argc, argv, std::cout, std::cerr); }
