#include "cli.hpp"

int main(int argc, char** argv) { return affinv::cli::run(argc, argv); }
