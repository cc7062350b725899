#include "graphdepth/cli.hpp"

int main(int argc, char** argv) { return graphdepth::run_cli(argc, argv); }
