#include "foldlab/cli.hpp"

int main(int argc, char** argv) { return foldlab::cli::main(argc, argv); }
