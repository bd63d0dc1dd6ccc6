#include "reid_cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return reid::cli::run(argc, argv, std::cout, std::cerr); }
