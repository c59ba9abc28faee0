#include "otrecon/cli/commands.hpp"

int main(int argc, char** argv) { return otrecon::cli::run_cli(argc, argv); }
