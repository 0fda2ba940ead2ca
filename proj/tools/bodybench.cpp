#include <iostream>

#include <bodybench/cli.hpp>

int main(int argc, char** argv) { return bodybench::run_cli(argc, argv, std::cout, std::cerr); }
