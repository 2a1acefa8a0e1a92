#include "exprate/cli.hpp"

int main(int argc, char** argv) { return exprate::cli::run(argc, argv); }
