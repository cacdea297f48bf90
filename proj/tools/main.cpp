#include "ltsmdiff/cli.hpp"

int main(int argc, char** argv) { return ltsm::cli::run(argc, argv); }
