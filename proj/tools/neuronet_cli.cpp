#include "neuronet/cli.hpp"

int main(int argc, char** argv) { return neuronet::run_cli(argc, argv); }
