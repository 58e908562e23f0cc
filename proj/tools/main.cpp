#include "expobench/cli.hpp"

int main(int argc, char** argv) { return expobench::run_cli(argc, argv); }
