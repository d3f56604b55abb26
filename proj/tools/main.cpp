#include <iostream>

#include "termrec/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return termrec::cli::run(args, std::cout, std::cerr);
}
