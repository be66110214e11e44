#include "ched/cli.hpp"

int main(int argc, char** argv) { return ched::cli::run(argc, argv); }
