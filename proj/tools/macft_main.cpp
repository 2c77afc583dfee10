#include "macft/cli.hpp"

int main(int argc, char** argv) { return macft::run_cli(argc, argv); }
