#include "cav/harness.hpp"

int main(int argc, char** argv) { return cav::harness::cli_main(argc, argv); }
