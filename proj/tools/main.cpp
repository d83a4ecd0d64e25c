#include "mtlab/cli.hpp"

int main(int argc, char** argv) { return mtlab::run_cli(argc, argv); }
