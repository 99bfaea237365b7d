#include "chaoslab/cli.hpp"

int main(int argc, char** argv) { return chaoslab::run_cli(argc, argv); }
