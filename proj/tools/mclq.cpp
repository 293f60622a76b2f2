#include "mclq/cli.hpp"

int main(int argc, char** argv) { return mclq::run_cli(argc, argv); }
