#include "mambaest_cli/cli.hpp"

int main(int argc, char** argv) { return mambaest::cli::run(argc, argv); }
