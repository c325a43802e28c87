#include "rlsched/cli.hpp"

int main(int argc, char** argv) { return rlsched::run_cli(argc, argv); }
