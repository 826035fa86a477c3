#include "helfrich/cli.hpp"

int main(int argc, char** argv) { return helfrich::cli::run(argc, argv); }
