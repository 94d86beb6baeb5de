#include "mdplab/cli.hpp"

int main(int argc, char** argv) { return mdplab::cli_main(argc, argv); }
