#include "cli.hpp"

int main(int argc, char** argv) { return sti::cli::run({argv + 1, argv + argc}); }
