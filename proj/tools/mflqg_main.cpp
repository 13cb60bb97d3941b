#include "mflqg/cli_runner.hpp"

int main(int argc, char** argv) { return mflqg::run_cli(argc, argv); }
