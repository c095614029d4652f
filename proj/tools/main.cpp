#include "sprl_cli.hpp"

int main(int argc, char** argv) { return sprl::cli::run(argc, argv, std::cout, std::cerr); }
