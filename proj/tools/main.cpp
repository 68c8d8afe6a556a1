#include "dlss/cli.hpp"

int main(int argc, char** argv) { return dlss::cli::run_cli(argc, argv); }
