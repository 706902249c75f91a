#include "advner/cli.hpp"

int main(int argc, char** argv) { return advner::cli::run(argc, argv); }
