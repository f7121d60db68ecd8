#include "cli.hpp"

int main(int argc, char** argv) { return spreadvol::cli::run(argc, argv); }
