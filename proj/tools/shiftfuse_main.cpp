#include "shiftfuse/cli.hpp"

int main(int argc, char** argv) { return shiftfuse::cli_main(argc, argv); }
