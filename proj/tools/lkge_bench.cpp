#include "lkge/cli.hpp"

int main(int argc, char** argv) { return lkge::run_cli(argc, argv); }
