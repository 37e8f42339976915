#include "vbgs/cli.hpp"

int main(int argc, char** argv) { return vbgs::cli::run(argc, argv); }
