#include "mve/cli.hpp"

int main(int argc, char** argv) { return mve::cli_main(argc, argv); }
