#include "edm/cli.hpp"

int main(int argc, char** argv) { return edm::run_cli(argc, argv); }
