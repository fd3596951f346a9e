#include "cli/commands.hpp"

int main(int argc, char** argv) { return samadapter::cli::run(argc, argv); }
