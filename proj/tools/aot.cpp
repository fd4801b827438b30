#include "cli.hpp"

int main(int argc, char** argv) { return aot::cli::run(argc, argv); }
