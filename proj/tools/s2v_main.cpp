#include "s2v/cli.hpp"

int main(int argc, char** argv) { return s2v::run_cli(argc, argv); }
