#include "sketchlattice/cli.hpp"

int main(int argc, char** argv) { return sketchlattice::run_cli(argc, argv); }
