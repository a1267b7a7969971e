#include <iostream>
#include <string>
#include <vector>

#include "canopy/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return canopy::cli::run(args, std::cout, std::cerr);
}
