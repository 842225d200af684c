#include "dnetknn/cli/commands.hpp"

#include <iostream>

int main(int argc, char** argv) { return dnetknn::cli::run(argc, argv, std::cout, std::cerr); }
