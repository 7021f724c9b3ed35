#include "avseg/cli.hpp"

int main(int argc, char** argv) { return avseg::cli::run(argc, argv); }
