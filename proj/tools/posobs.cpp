#include "posobs/cli.hpp"

int main(int argc, char** argv) { return posobs::cli::run(argc, argv); }
