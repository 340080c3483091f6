#include "uwer/cli.hpp"

int main(int argc, char** argv) { return uwer::cli::main(argc, argv); }
