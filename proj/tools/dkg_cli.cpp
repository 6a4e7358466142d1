#include "dkg/cli.hpp"

int main(int argc, char** argv) { return dkg::cli::run_command(argc, argv); }
