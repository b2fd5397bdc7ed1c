#include <iostream>
#include <string>
#include <vector>

#include "cloudfusion/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return cloudfusion::run_cli(args, std::cout, std::cerr);
}
