#include "app.hpp"

int main(int argc, char** argv) { return splitheat::cli::run_cli(argc, argv, std::cout, std::cerr); }
