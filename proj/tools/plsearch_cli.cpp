#include "cli.hpp"

int main(int argc, char** argv) { return plsearch::cli::run(argc, argv); }
