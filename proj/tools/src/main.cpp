#include <iostream>

#include "mvgmn/cli.hpp"

int main(int argc, char** argv) { return mvgmn::cli::dispatch(argc, argv, std::cout, std::cerr); }
