#include "sftpl/cli.hpp"

int main(int argc, char** argv) { return sftpl::cli::main(argc, argv); }
