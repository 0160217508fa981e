#include "diffnet/cli.hpp"

int main(int argc, char** argv) { return diffnet::cli::run(argc, argv); }
