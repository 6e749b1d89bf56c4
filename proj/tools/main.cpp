#include "zubov/cli.hpp"

int main(int argc, char** argv) { return zubov::cli_main(argc, argv); }
