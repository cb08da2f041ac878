#include "cli.hpp"

int main(int argc, char** argv) { return geoperc::cli::run(argc, argv); }
