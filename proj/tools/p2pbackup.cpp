#include <iostream>

#include "p2pbackup/cli.hpp"

int main(int argc, char** argv) { return p2pbackup::run_cli(argc, argv, std::cout, std::cerr); }
