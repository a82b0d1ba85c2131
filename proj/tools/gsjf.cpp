#include <iostream>

#include "gsj/commands.hpp"

int main(int argc, char** argv) { return gsj::cli::run(argc, argv, std::cout, std::cerr); }
