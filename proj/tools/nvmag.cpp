#include "nvmag/cli.hpp"

int main(int argc, char** argv) { return nvmag::cli_main(argc, argv); }
