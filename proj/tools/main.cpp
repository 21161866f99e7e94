// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "gridattn/cli.hpp"

int main(int argc, char** argv) { return gridattn::cli::run(argc, argv, std::cout, std::cerr); }
