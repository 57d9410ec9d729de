#include "mimo/cli.hpp"

int main(int argc, char** argv) { return mimo::run_cli(argc, argv); }
