#include "dnaadv/cli.hpp"

int main(int argc, char** argv) { return dnaadv::run_cli(argc, argv); }
