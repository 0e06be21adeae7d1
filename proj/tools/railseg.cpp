#include <iostream>

#include "railseg/cli.hpp"

int main(int argc, char** argv) {
    return railseg::cli::run({argv + 1, argv + argc}, std::cout, std::cerr);
}
